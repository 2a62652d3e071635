//! The full testing pipeline on one sample: bandwidth choice, fit,
//! statistics, critical values or bootstrap p-values, and the change-point
//! estimate.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bootstrap::{run_bootstrap, BootstrapConfig, MultiplierFamily};
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, Profile};
use crate::limit::{asymptotic_decision, bundled_tables, CriticalTableSet, FunctionalKind};
use crate::process::streaming_functionals;
use crate::regression::{
    c_hat, cv_bandwidth, default_bandwidth_grid, nw_fit, variance_at_samples, FitState, Sample,
    WeightWindow,
};
use crate::scalar::Scalar;
use crate::statistics::{
    estimate_changepoint, normalize, statistic, ChangePointEstimate, StatisticKind,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestMode {
    /// Critical values of the Kiefer-Müller limit (`d = 1` only).
    #[default]
    Asymptotic,
    Bootstrap,
}

impl fmt::Display for TestMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestMode::Asymptotic => "asymptotic",
            TestMode::Bootstrap => "bootstrap",
        })
    }
}

impl FromStr for TestMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "asymptotic" => Ok(TestMode::Asymptotic),
            "bootstrap" => Ok(TestMode::Bootstrap),
            _ => Err(Error::InvalidInput(format!("unknown mode `{s}`"))),
        }
    }
}

/// `"cv"` or a fixed positive bandwidth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BandwidthRepr", into = "BandwidthRepr")]
pub enum BandwidthRule {
    #[default]
    Cv,
    Fixed(f64),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BandwidthRepr {
    Number(f64),
    Text(String),
}

impl TryFrom<BandwidthRepr> for BandwidthRule {
    type Error = Error;

    fn try_from(r: BandwidthRepr) -> Result<Self> {
        match r {
            BandwidthRepr::Number(h) => BandwidthRule::fixed(h),
            BandwidthRepr::Text(s) => s.parse(),
        }
    }
}

impl From<BandwidthRule> for BandwidthRepr {
    fn from(b: BandwidthRule) -> Self {
        match b {
            BandwidthRule::Cv => BandwidthRepr::Text("cv".into()),
            BandwidthRule::Fixed(h) => BandwidthRepr::Number(h),
        }
    }
}

impl BandwidthRule {
    pub fn fixed(h: f64) -> Result<Self> {
        if h > 0.0 && h.is_finite() {
            Ok(BandwidthRule::Fixed(h))
        } else {
            Err(Error::InvalidInput(format!(
                "bandwidth must be positive and finite, got {h}"
            )))
        }
    }
}

impl FromStr for BandwidthRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("cv") {
            return Ok(BandwidthRule::Cv);
        }
        let h: f64 = s.parse().map_err(|_| {
            Error::InvalidInput(format!("bandwidth must be `cv` or a number, got `{s}`"))
        })?;
        BandwidthRule::fixed(h)
    }
}

/// How the weight window is chosen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WindowRule {
    #[default]
    Everywhere,
    /// Box between the marginal `tau` and `1 - tau` quantiles.
    Quantile { tau: f64 },
    /// `[-c, c]^d`.
    Box { half_width: f64 },
}

impl WindowRule {
    pub fn resolve<T: Scalar>(&self, sample: &Sample<T>) -> Result<WeightWindow<T>> {
        match *self {
            WindowRule::Everywhere => Ok(WeightWindow::Everywhere),
            WindowRule::Quantile { tau } => WeightWindow::from_quantiles(sample, tau),
            WindowRule::Box { half_width } => {
                WeightWindow::symmetric_box(T::lit(half_width), sample.d())
            }
        }
    }
}

pub const DEFAULT_STATISTICS: [StatisticKind; 4] = [
    StatisticKind::Tn1,
    StatisticKind::Tn2,
    StatisticKind::Ks,
    StatisticKind::Cm,
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub kernel: Profile,
    pub bandwidth: BandwidthRule,
    pub window: WindowRule,
    pub statistics: Vec<StatisticKind>,
    pub mode: TestMode,
    pub alpha: f64,
    pub bootstrap_replications: usize,
    pub multiplier: MultiplierFamily,
    pub seed: u64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            kernel: Profile::Epanechnikov4,
            bandwidth: BandwidthRule::Cv,
            window: WindowRule::Everywhere,
            statistics: DEFAULT_STATISTICS.to_vec(),
            mode: TestMode::Asymptotic,
            alpha: 0.05,
            bootstrap_replications: 200,
            multiplier: MultiplierFamily::Rademacher,
            seed: 1,
        }
    }
}

/// Test result for one statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticOutcome {
    pub kind: StatisticKind,
    pub value: f64,
    /// Value divided by the matching power of `ĉ_n` (`d = 1`, `ĉ_n > 0`).
    pub normalized: Option<f64>,
    /// Critical value on the scale the decision compares: normalized in
    /// asymptotic mode, raw in bootstrap mode.
    pub critical_value: f64,
    /// Critical value on the scale of the raw statistic.
    pub critical_value_raw: f64,
    pub p_value: f64,
    /// The p-value is an upper bound (observed value beyond every tabulated
    /// draw).
    pub p_value_is_bound: bool,
    pub reject: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub n: usize,
    pub d: usize,
    pub bandwidth: f64,
    pub c_hat: f64,
    pub statistics: Vec<StatisticOutcome>,
    pub changepoint: ChangePointEstimate<f64>,
    /// `sup_z |T̂_n(i/n, z)|` for `i = 1..=n`.
    pub trace: Vec<f64>,
    pub degenerate_points: usize,
}

impl PipelineOutcome {
    pub fn get(&self, kind: StatisticKind) -> Option<&StatisticOutcome> {
        self.statistics.iter().find(|s| s.kind == kind)
    }
}

fn is_constant<T: Scalar>(y: &[T]) -> bool {
    y.windows(2).all(|w| w[0] == w[1])
}

/// Chooses the bandwidth and fits the smoother. A constant response is
/// fitted by itself, so its residuals are exactly zero.
pub fn fit_sample<T: Scalar>(sample: &Sample<T>, opts: &PipelineOptions) -> Result<FitState<T>> {
    let kernel = KernelSpec::new(opts.kernel, sample.d())?;
    let h = match opts.bandwidth {
        BandwidthRule::Cv => cv_bandwidth(sample, &kernel, &default_bandwidth_grid(sample))?,
        BandwidthRule::Fixed(h) => T::lit(h),
    };
    let window = opts.window.resolve(sample)?;
    let fit = nw_fit(sample, &kernel, h, &window)?;
    if is_constant(sample.y()) {
        let degenerate = fit.degenerate().to_vec();
        return FitState::from_parts(
            sample.clone(),
            kernel,
            h,
            sample.y().to_vec(),
            window,
            degenerate,
        );
    }
    Ok(fit)
}

/// Runs the configured tests on one sample. `tables` defaults to the
/// bundled critical tables.
pub fn evaluate<T: Scalar>(
    sample: &Sample<T>,
    opts: &PipelineOptions,
    tables: Option<&CriticalTableSet>,
) -> Result<PipelineOutcome> {
    if opts.statistics.is_empty() {
        return Err(Error::InvalidInput("no statistics requested".into()));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::InvalidInput(format!(
            "level {} outside (0, 1)",
            opts.alpha
        )));
    }
    if opts.mode == TestMode::Asymptotic && sample.d() != 1 {
        return Err(Error::InvalidInput(format!(
            "asymptotic critical values exist only for one covariate (d = {}); use bootstrap mode",
            sample.d()
        )));
    }
    let fit = fit_sample(sample, opts)?;
    let kinds = &opts.statistics;
    let variance = kinds
        .iter()
        .any(|k| k.needs_variance())
        .then(|| variance_at_samples(&fit));
    let f = streaming_functionals(&fit, variance.as_deref());
    let c = c_hat(&fit);
    let raw: Vec<_> = kinds
        .iter()
        .map(|&k| statistic(&f, k, fit.d()))
        .collect::<Result<_>>()?;

    let statistics = match opts.mode {
        TestMode::Asymptotic => {
            let tables = tables.unwrap_or_else(|| bundled_tables());
            raw.iter()
                .map(|&stat| {
                    let fk = FunctionalKind::for_statistic(stat.kind);
                    let table = tables.get(fk).ok_or_else(|| {
                        Error::InvalidInput(format!("no critical table for {}", stat.kind))
                    })?;
                    let scale = c.as_f64().powf(stat.kind.normalizer_power());
                    if !(c > T::zero()) {
                        let critical = table.quantile(1.0 - opts.alpha);
                        return Ok(StatisticOutcome {
                            kind: stat.kind,
                            value: stat.value.as_f64(),
                            normalized: None,
                            critical_value: critical,
                            critical_value_raw: critical * scale,
                            p_value: 1.0,
                            p_value_is_bound: false,
                            reject: false,
                        });
                    }
                    let stat = normalize(stat, c)?;
                    let dec = asymptotic_decision(&stat, table, opts.alpha)?;
                    Ok(StatisticOutcome {
                        kind: stat.kind,
                        value: stat.value.as_f64(),
                        normalized: stat.normalized.map(|v| v.as_f64()),
                        critical_value: dec.critical_value,
                        critical_value_raw: dec.critical_value * scale,
                        p_value: dec.p_value,
                        p_value_is_bound: dec.p_value_is_bound,
                        reject: dec.reject,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
        TestMode::Bootstrap => {
            let cfg = BootstrapConfig {
                replications: opts.bootstrap_replications,
                alpha: opts.alpha,
                family: opts.multiplier,
                seed: opts.seed,
            };
            let runs = run_bootstrap(&fit, kinds, &cfg)?;
            raw.iter()
                .zip(runs)
                .map(|(&stat, run)| {
                    let normalized = if fit.d() == 1 && c > T::zero() {
                        normalize(stat, c)?.normalized.map(|v| v.as_f64())
                    } else {
                        None
                    };
                    Ok(StatisticOutcome {
                        kind: stat.kind,
                        value: stat.value.as_f64(),
                        normalized,
                        critical_value: run.critical_value.as_f64(),
                        critical_value_raw: run.critical_value.as_f64(),
                        p_value: run.p_value,
                        p_value_is_bound: false,
                        reject: run.reject,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };

    let cp = estimate_changepoint(&f);
    Ok(PipelineOutcome {
        n: fit.n(),
        d: fit.d(),
        bandwidth: fit.bandwidth().as_f64(),
        c_hat: c.as_f64(),
        statistics,
        changepoint: ChangePointEstimate {
            s_hat: cp.s_hat.as_f64(),
            index: cp.index,
            value: cp.value.as_f64(),
            degenerate: cp.degenerate,
        },
        trace: f.per_s_sup.iter().map(|v| v.as_f64()).collect(),
        degenerate_points: fit.degenerate().iter().filter(|&&b| b).count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bandwidth_rule_parses_and_serializes() {
        assert_eq!("cv".parse::<BandwidthRule>().unwrap(), BandwidthRule::Cv);
        assert_eq!(
            "0.25".parse::<BandwidthRule>().unwrap(),
            BandwidthRule::Fixed(0.25)
        );
        assert!("-1".parse::<BandwidthRule>().is_err());
        assert!("wide".parse::<BandwidthRule>().is_err());
        let opts = PipelineOptions {
            bandwidth: BandwidthRule::Fixed(0.5),
            ..Default::default()
        };
        let text = serde_json::to_string(&opts).unwrap();
        assert_eq!(
            serde_json::from_str::<PipelineOptions>(&text).unwrap(),
            opts
        );
    }

    #[test]
    fn constant_response_is_never_rejected() {
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let s = Sample::univariate(x, vec![2.5; 40]).unwrap();
        let opts = PipelineOptions {
            statistics: StatisticKind::ALL.to_vec(),
            ..Default::default()
        };
        let out = evaluate(&s, &opts, None).unwrap();
        for st in &out.statistics {
            assert_eq!(st.value, 0.0);
            assert_eq!(st.p_value, 1.0);
            assert!(!st.reject);
        }
        assert!(out.changepoint.degenerate);
    }

    #[test]
    fn asymptotic_mode_needs_one_covariate() {
        let s = Sample::new(
            (0..60).map(|i| (i as f64).cos()).collect(),
            2,
            (0..30).map(|i| i as f64).collect(),
        )
        .unwrap();
        assert!(evaluate(&s, &PipelineOptions::default(), None).is_err());
    }
}
