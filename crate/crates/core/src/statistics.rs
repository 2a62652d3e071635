//! Kolmogorov-Smirnov and Cramér-von Mises type functionals of the marked
//! process, their normalizations by `ĉ_n`, and the change-point estimator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::process::{streaming_functionals, Functionals};
use crate::regression::{variance_at_samples, FitState};
use crate::scalar::Scalar;

/// Test statistic families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StatisticKind {
    /// `sup_{s,z} |T̂_n(s,z)|`
    #[serde(rename = "Tn1")]
    Tn1,
    /// `sup_z ∫₀¹ T̂_n(s,z)² ds`
    #[serde(rename = "Tn2")]
    Tn2,
    /// `sup_s n⁻¹ Σ_k T̂_n(s,X_k)² σ̂²(X_k)`
    #[serde(rename = "Tn3tilde")]
    Tn3Tilde,
    /// `∫₀¹ n⁻¹ Σ_k T̂_n(s,X_k)² σ̂²(X_k) ds`
    #[serde(rename = "Tn4tilde")]
    Tn4Tilde,
    /// `sup_s |T̂_n(s,∞)|`, the classic CUSUM.
    #[serde(rename = "KS")]
    Ks,
    /// `∫₀¹ T̂_n(s,∞)² ds`
    #[serde(rename = "CM")]
    Cm,
}

impl StatisticKind {
    pub const ALL: [StatisticKind; 6] = [
        StatisticKind::Tn1,
        StatisticKind::Tn2,
        StatisticKind::Tn3Tilde,
        StatisticKind::Tn4Tilde,
        StatisticKind::Ks,
        StatisticKind::Cm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StatisticKind::Tn1 => "Tn1",
            StatisticKind::Tn2 => "Tn2",
            StatisticKind::Tn3Tilde => "Tn3tilde",
            StatisticKind::Tn4Tilde => "Tn4tilde",
            StatisticKind::Ks => "KS",
            StatisticKind::Cm => "CM",
        }
    }

    /// Power of `ĉ_n` dividing the statistic in its distribution-free form.
    pub fn normalizer_power(self) -> f64 {
        match self {
            StatisticKind::Tn1 | StatisticKind::Ks => 0.5,
            StatisticKind::Tn2 | StatisticKind::Cm => 1.0,
            StatisticKind::Tn3Tilde | StatisticKind::Tn4Tilde => 2.0,
        }
    }

    /// Whether the statistic needs the variance estimates `σ̂²(X_k)`.
    pub fn needs_variance(self) -> bool {
        matches!(self, StatisticKind::Tn3Tilde | StatisticKind::Tn4Tilde)
    }

    /// Whether the statistic only uses the unmarked margin; such statistics
    /// are distribution-free after normalization in any dimension.
    pub fn is_unmarked(self) -> bool {
        matches!(self, StatisticKind::Ks | StatisticKind::Cm)
    }
}

impl fmt::Display for StatisticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StatisticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.to_ascii_lowercase().replace(['_', '-', '~'], "");
        let kind = match key.as_str() {
            "tn1" | "t1" => StatisticKind::Tn1,
            "tn2" | "t2" => StatisticKind::Tn2,
            "tn3tilde" | "tn3" | "t3" => StatisticKind::Tn3Tilde,
            "tn4tilde" | "tn4" | "t4" => StatisticKind::Tn4Tilde,
            "ks" => StatisticKind::Ks,
            "cm" => StatisticKind::Cm,
            _ => return Err(Error::InvalidInput(format!("unknown statistic `{s}`"))),
        };
        Ok(kind)
    }
}

/// A statistic value with its optional `ĉ_n` normalization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatisticValue<T> {
    pub kind: StatisticKind,
    pub value: T,
    pub normalized: Option<T>,
    pub n: usize,
    pub d: usize,
}

impl<T: Scalar> StatisticValue<T> {
    fn new(kind: StatisticKind, value: T, n: usize, d: usize) -> Self {
        Self {
            kind,
            value,
            normalized: None,
            n,
            d,
        }
    }
}

pub fn stat_tn1<T: Scalar>(f: &Functionals<T>, d: usize) -> StatisticValue<T> {
    StatisticValue::new(StatisticKind::Tn1, f.sup_full(), f.n, d)
}

pub fn stat_ks<T: Scalar>(f: &Functionals<T>, d: usize) -> StatisticValue<T> {
    StatisticValue::new(StatisticKind::Ks, f.sup_margin(), f.n, d)
}

pub fn stat_tn2<T: Scalar>(f: &Functionals<T>, d: usize) -> StatisticValue<T> {
    let v = f
        .column_integrals
        .iter()
        .copied()
        .fold(f.margin_integral, T::max);
    StatisticValue::new(StatisticKind::Tn2, v, f.n, d)
}

pub fn stat_cm<T: Scalar>(f: &Functionals<T>, d: usize) -> StatisticValue<T> {
    StatisticValue::new(StatisticKind::Cm, f.margin_integral, f.n, d)
}

fn weighted_rows<T: Scalar>(f: &Functionals<T>) -> Result<&[T]> {
    f.weighted_row_means
        .as_deref()
        .ok_or_else(|| Error::Contract("variance-weighted functionals were not computed".into()))
}

pub fn stat_tn3_tilde<T: Scalar>(f: &Functionals<T>, d: usize) -> Result<StatisticValue<T>> {
    let rows = weighted_rows(f)?;
    let v = rows.iter().copied().fold(T::zero(), T::max);
    Ok(StatisticValue::new(StatisticKind::Tn3Tilde, v, f.n, d))
}

pub fn stat_tn4_tilde<T: Scalar>(f: &Functionals<T>, d: usize) -> Result<StatisticValue<T>> {
    let rows = weighted_rows(f)?;
    let n = rows.len();
    // the last row sits at s = 1 and has measure zero
    let s: T = rows[..n.saturating_sub(1)].iter().copied().sum();
    Ok(StatisticValue::new(
        StatisticKind::Tn4Tilde,
        s / T::from_count(n),
        f.n,
        d,
    ))
}

/// Evaluates one statistic kind.
pub fn statistic<T: Scalar>(
    f: &Functionals<T>,
    kind: StatisticKind,
    d: usize,
) -> Result<StatisticValue<T>> {
    Ok(match kind {
        StatisticKind::Tn1 => stat_tn1(f, d),
        StatisticKind::Tn2 => stat_tn2(f, d),
        StatisticKind::Tn3Tilde => stat_tn3_tilde(f, d)?,
        StatisticKind::Tn4Tilde => stat_tn4_tilde(f, d)?,
        StatisticKind::Ks => stat_ks(f, d),
        StatisticKind::Cm => stat_cm(f, d),
    })
}

/// Raw statistics of a fit for several kinds, from one streaming pass over
/// the process. `σ̂²` weights are computed only when a kind needs them.
pub fn statistics_for_fit<T: Scalar>(
    fit: &FitState<T>,
    kinds: &[StatisticKind],
) -> Result<Vec<StatisticValue<T>>> {
    let variance = kinds
        .iter()
        .any(|k| k.needs_variance())
        .then(|| variance_at_samples(fit));
    let f = streaming_functionals(fit, variance.as_deref());
    kinds.iter().map(|&k| statistic(&f, k, fit.d())).collect()
}

/// Divides the statistic by `ĉ_n` raised to the kind's power.
pub fn normalize<T: Scalar>(stat: StatisticValue<T>, c_hat: T) -> Result<StatisticValue<T>> {
    if !(c_hat > T::zero()) || !c_hat.is_finite() {
        return Err(Error::DegenerateNormalizer(c_hat.as_f64()));
    }
    let p = stat.kind.normalizer_power();
    let scale = if p == 0.5 {
        c_hat.sqrt()
    } else {
        c_hat.powf(T::lit(p))
    };
    Ok(StatisticValue {
        normalized: Some(stat.value / scale),
        ..stat
    })
}

/// Lattice argmax of `sup_z |T̂_n(s,z)|` over `s = i/n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangePointEstimate<T> {
    pub s_hat: T,
    /// `⌊n ŝ⌋`, in `1..=n`.
    pub index: usize,
    pub value: T,
    /// The process vanished identically and the estimate carries no
    /// information.
    pub degenerate: bool,
}

/// `ŝ_n = argmax_s sup_z |T̂_n(s,z)|`; ties resolve to the smallest `s`.
pub fn estimate_changepoint<T: Scalar>(f: &Functionals<T>) -> ChangePointEstimate<T> {
    estimate_changepoint_from_trace(&f.per_s_sup)
}

/// Change-point estimate from a per-row supremum trace (`i = 1..=n`).
pub fn estimate_changepoint_from_trace<T: Scalar>(trace: &[T]) -> ChangePointEstimate<T> {
    let n = trace.len();
    let mut best = 0usize;
    for (i, &v) in trace.iter().enumerate() {
        if v > trace[best] {
            best = i;
        }
    }
    let value = trace.get(best).copied().unwrap_or_else(T::zero);
    ChangePointEstimate {
        s_hat: T::from_count(best + 1) / T::from_count(n.max(1)),
        index: best + 1,
        value,
        degenerate: value == T::zero(),
    }
}
