//! Wild bootstrap for the marked-process statistics.
//!
//! Bootstrap responses are `Y*_i = m̂(X_i) + Û_i η_i` on the original
//! covariates. Each replication refits the smoother with the original
//! bandwidth and window, then recomputes the statistics from the refit
//! residuals `Û* = Y* − m̂*`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limit::order_statistic_quantile;
use crate::process::streaming_functionals_for;
use crate::regression::{nw_fit, FitState, Sample, Smoother};
use crate::rng::{stream, Domain};
use crate::scalar::Scalar;
use crate::statistics::{statistic, statistics_for_fit, StatisticKind};

/// Multiplier distributions with mean 0 and variance 1.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MultiplierFamily {
    /// `±1` with probability 1/2 each.
    #[default]
    Rademacher,
    /// Two-point law with `E η³ = 1`.
    MammenTwoPoint,
    StandardNormal,
}

const SQRT5: f64 = 2.236_067_977_499_79;

impl MultiplierFamily {
    pub const ALL: [MultiplierFamily; 3] = [
        MultiplierFamily::Rademacher,
        MultiplierFamily::MammenTwoPoint,
        MultiplierFamily::StandardNormal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MultiplierFamily::Rademacher => "rademacher",
            MultiplierFamily::MammenTwoPoint => "mammen_two_point",
            MultiplierFamily::StandardNormal => "standard_normal",
        }
    }

    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        match self {
            MultiplierFamily::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            MultiplierFamily::MammenTwoPoint => {
                // P(η = (1 - √5)/2) = (√5 + 1)/(2√5)
                let p = (SQRT5 + 1.0) / (2.0 * SQRT5);
                if rng.random::<f64>() < p {
                    (1.0 - SQRT5) / 2.0
                } else {
                    (1.0 + SQRT5) / 2.0
                }
            }
            MultiplierFamily::StandardNormal => rng.sample(StandardNormal),
        }
    }
}

impl fmt::Display for MultiplierFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MultiplierFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace('-', "_");
        match key.as_str() {
            "rademacher" => Ok(MultiplierFamily::Rademacher),
            "mammen" | "mammen_two_point" => Ok(MultiplierFamily::MammenTwoPoint),
            "normal" | "gaussian" | "standard_normal" => Ok(MultiplierFamily::StandardNormal),
            _ => Err(Error::InvalidInput(format!(
                "unknown multiplier family `{s}`"
            ))),
        }
    }
}

/// Multiplier vector for replication `b`.
pub fn multipliers(family: MultiplierFamily, n: usize, seed: u64, b: u64) -> Vec<f64> {
    let mut rng = stream(seed, Domain::Multipliers, b);
    (0..n).map(|_| family.draw(&mut rng)).collect()
}

fn check_length<T>(fit: &FitState<T>, eta: &[T]) -> Result<()>
where
    T: Scalar,
{
    if eta.len() != fit.n() {
        return Err(Error::Contract(format!(
            "multiplier vector has length {}, expected {}",
            eta.len(),
            fit.n()
        )));
    }
    Ok(())
}

/// `m̂ + Û η`, returning the observed response itself when `η = 1` so that
/// unit multipliers reproduce the data bit for bit.
#[inline]
fn star_response<T: Scalar>(y: T, m: T, u: T, eta: T) -> T {
    if eta == T::one() {
        y
    } else {
        m + u * eta
    }
}

fn star_responses<T: Scalar>(fit: &FitState<T>, eta: impl Iterator<Item = T>, out: &mut Vec<T>) {
    out.clear();
    let parts = fit
        .sample()
        .y()
        .iter()
        .zip(fit.fitted())
        .zip(fit.residuals());
    out.extend(
        parts
            .zip(eta)
            .map(|(((&y, &m), &u), e)| star_response(y, m, u, e)),
    );
}

/// `(X_i, m̂(X_i) + Û_i η_i)` on the original covariates.
pub fn bootstrap_sample<T: Scalar>(fit: &FitState<T>, eta: &[T]) -> Result<Sample<T>> {
    check_length(fit, eta)?;
    let mut y = Vec::with_capacity(eta.len());
    star_responses(fit, eta.iter().copied(), &mut y);
    fit.sample().with_responses(y)
}

/// One bootstrap statistic by a full refit. [`run_bootstrap`] takes a
/// faster route that agrees with this one.
pub fn bootstrap_statistic<T: Scalar>(
    fit: &FitState<T>,
    kind: StatisticKind,
    eta: &[T],
) -> Result<T> {
    let sample = bootstrap_sample(fit, eta)?;
    let refit = nw_fit(&sample, fit.kernel(), fit.bandwidth(), fit.window())?;
    Ok(statistics_for_fit(&refit, &[kind])?[0].value)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapConfig {
    pub replications: usize,
    pub alpha: f64,
    pub family: MultiplierFamily,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            replications: 200,
            alpha: 0.05,
            family: MultiplierFamily::Rademacher,
            seed: 1,
        }
    }
}

/// Bootstrap distribution of one statistic and the resulting test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapRun<T> {
    pub kind: StatisticKind,
    pub replications: usize,
    pub observed: T,
    /// `T*_b` in replication order.
    pub values: Vec<T>,
    /// `(1 + #{T*_b ≥ T_obs}) / (B + 1)`.
    pub p_value: f64,
    pub alpha: f64,
    /// Empirical `(1−α)` quantile of the bootstrap values.
    pub critical_value: T,
    pub reject: bool,
    pub family: MultiplierFamily,
    pub seed: u64,
}

impl<T: Scalar> BootstrapRun<T> {
    fn from_values(
        kind: StatisticKind,
        observed: T,
        values: Vec<T>,
        cfg: &BootstrapConfig,
    ) -> Self {
        let b = values.len();
        let exceed = values.iter().filter(|&&v| v >= observed).count();
        let mut sorted: Vec<f64> = values.iter().map(|v| v.as_f64()).collect();
        sorted.sort_by(f64::total_cmp);
        let critical_value = T::lit(order_statistic_quantile(&sorted, 1.0 - cfg.alpha));
        Self {
            kind,
            replications: b,
            observed,
            values,
            p_value: (1 + exceed) as f64 / (b + 1) as f64,
            alpha: cfg.alpha,
            critical_value,
            reject: observed > critical_value,
            family: cfg.family,
            seed: cfg.seed,
        }
    }
}

/// Bootstraps several statistics at once; all kinds share the multipliers
/// of each replication. Replication `b` draws from stream `b` of the seed,
/// so results do not depend on the number of worker threads.
pub fn run_bootstrap<T: Scalar>(
    fit: &FitState<T>,
    kinds: &[StatisticKind],
    cfg: &BootstrapConfig,
) -> Result<Vec<BootstrapRun<T>>> {
    if cfg.replications < 19 {
        return Err(Error::Contract(format!(
            "at least 19 bootstrap replications are required, got {}",
            cfg.replications
        )));
    }
    if !(cfg.alpha > 0.0 && cfg.alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "level {} outside (0, 1)",
            cfg.alpha
        )));
    }
    let observed = statistics_for_fit(fit, kinds)?;
    let smoother = Smoother::new(fit.sample(), fit.kernel(), fit.bandwidth())?;
    let need_var = kinds.iter().any(|k| k.needs_variance());
    let n = fit.n();
    let d = fit.d();
    let per_b: Vec<Vec<T>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map_init(
            || {
                (
                    Vec::with_capacity(n),
                    Vec::with_capacity(n),
                    Vec::with_capacity(n),
                )
            },
            |(ystar, mstar, var), b| -> Result<Vec<T>> {
                let eta = multipliers(cfg.family, n, cfg.seed, b);
                star_responses(fit, eta.iter().map(|&e| T::lit(e)), ystar);
                smoother.apply(ystar, mstar);
                let resid: Vec<T> = ystar
                    .iter()
                    .zip(mstar.iter())
                    .map(|(&y, &m)| y - m)
                    .collect();
                let variance = if need_var {
                    smoother.local_variance(ystar, mstar, var);
                    Some(var.as_slice())
                } else {
                    None
                };
                let f = streaming_functionals_for(fit, &resid, variance);
                kinds
                    .iter()
                    .map(|&k| statistic(&f, k, d).map(|s| s.value))
                    .collect()
            },
        )
        .collect::<Result<_>>()?;
    Ok(kinds
        .iter()
        .enumerate()
        .map(|(j, &kind)| {
            let values = per_b.iter().map(|v| v[j]).collect();
            BootstrapRun::from_values(kind, observed[j].value, values, cfg)
        })
        .collect())
}
