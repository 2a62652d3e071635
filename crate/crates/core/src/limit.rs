//! Critical values for the distribution-free tests (`d = 1`).
//!
//! After normalization by `ĉ_n` the statistics converge to functionals of a
//! Kiefer-Müller process `K₀` on `[0,1]²`, the centred Gaussian process with
//! covariance `(s₁∧s₂ − s₁s₂)(t₁∧t₂)`. Paths are simulated on a lattice as
//! a Brownian sheet tied down in `s`:
//!
//! ```text
//! W(s_i, t_k) = Σ_{a ≤ i, b ≤ k} Z_ab / √(G_s G_t),   K₀(s, t) = W(s, t) − s W(1, t)
//! ```
//!
//! Lattice suprema are biased slightly low relative to the continuum
//! suprema. The statistics are evaluated on a lattice of comparable size,
//! so the tables are built at a resolution close to the sample sizes of
//! interest.

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Domain};
use crate::scalar::Scalar;
use crate::statistics::{StatisticKind, StatisticValue};

/// Number of order statistics kept in a stored table.
pub const STORED_DRAWS: usize = 4096;

/// Levels tabulated by default.
pub const DEFAULT_LEVELS: [f64; 9] = [0.5, 0.75, 0.8, 0.9, 0.95, 0.975, 0.99, 0.995, 0.999];

/// Functionals of `K₀` that appear as limits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionalKind {
    /// `sup_{s,t} |K₀(s,t)|`, limit of `T_n1 / ĉ^{1/2}`.
    SupSt,
    /// `sup_t ∫₀¹ K₀(s,t)² ds`, limit of `T_n2 / ĉ`.
    SupTIntS,
    /// `sup_s ∫₀¹ K₀(s,t)² dt`, limit of `T̃_n3 / ĉ²`.
    SupSIntT,
    /// `∫∫ K₀(s,t)² dt ds`, limit of `T̃_n4 / ĉ²`.
    IntInt,
    /// `sup_s |K₀(s,1)|`, a Brownian-bridge supremum; limit of `KS / ĉ^{1/2}`.
    MarginSup,
    /// `∫₀¹ K₀(s,1)² ds`; limit of `CM / ĉ`.
    MarginInt,
}

impl FunctionalKind {
    pub const ALL: [FunctionalKind; 6] = [
        FunctionalKind::SupSt,
        FunctionalKind::SupTIntS,
        FunctionalKind::SupSIntT,
        FunctionalKind::IntInt,
        FunctionalKind::MarginSup,
        FunctionalKind::MarginInt,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FunctionalKind::SupSt => "sup_st",
            FunctionalKind::SupTIntS => "sup_t_int_s",
            FunctionalKind::SupSIntT => "sup_s_int_t",
            FunctionalKind::IntInt => "int_int",
            FunctionalKind::MarginSup => "margin_sup",
            FunctionalKind::MarginInt => "margin_int",
        }
    }

    /// Limit functional of a normalized statistic.
    pub fn for_statistic(kind: StatisticKind) -> Self {
        match kind {
            StatisticKind::Tn1 => FunctionalKind::SupSt,
            StatisticKind::Tn2 => FunctionalKind::SupTIntS,
            StatisticKind::Tn3Tilde => FunctionalKind::SupSIntT,
            StatisticKind::Tn4Tilde => FunctionalKind::IntInt,
            StatisticKind::Ks => FunctionalKind::MarginSup,
            StatisticKind::Cm => FunctionalKind::MarginInt,
        }
    }
}

impl std::fmt::Display for FunctionalKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FunctionalKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Some(k) = FunctionalKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
        {
            return Ok(k);
        }
        s.parse::<StatisticKind>()
            .map(FunctionalKind::for_statistic)
            .map_err(|_| Error::InvalidInput(format!("unknown limit functional `{s}`")))
    }
}

/// One simulated path of `K₀` on the lattice `{i/G_s} × {k/G_t}`,
/// including the zero boundary rows `i = 0` and `k = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct KieferGrid<T> {
    g_s: usize,
    g_t: usize,
    values: Vec<T>,
}

impl<T: Scalar> KieferGrid<T> {
    pub fn g_s(&self) -> usize {
        self.g_s
    }

    pub fn g_t(&self) -> usize {
        self.g_t
    }

    /// `K₀(i/G_s, k/G_t)` for `0 ≤ i ≤ G_s`, `0 ≤ k ≤ G_t`.
    #[inline]
    pub fn at(&self, i: usize, k: usize) -> T {
        self.values[i * (self.g_t + 1) + k]
    }

    /// Path with explicit values, row-major over `(G_s+1) × (G_t+1)`.
    pub fn from_values(g_s: usize, g_t: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != (g_s + 1) * (g_t + 1) {
            return Err(Error::Contract("lattice size mismatch".into()));
        }
        Ok(Self { g_s, g_t, values })
    }
}

/// Simulates one path of `K₀`.
pub fn simulate_kiefer_path<T: Scalar>(g_s: usize, g_t: usize, seed: u64) -> Result<KieferGrid<T>> {
    check_resolution(g_s, g_t)?;
    let mut rng = stream(seed, Domain::Kiefer, 0);
    let mut values = Vec::new();
    fill_path(g_s, g_t, &mut rng, &mut values);
    Ok(KieferGrid {
        g_s,
        g_t,
        values: values.into_iter().map(T::lit).collect(),
    })
}

fn check_resolution(g_s: usize, g_t: usize) -> Result<()> {
    if g_s < 2 || g_t < 2 {
        return Err(Error::Contract(format!(
            "lattice resolution must be at least 2 × 2, got {g_s} × {g_t}"
        )));
    }
    Ok(())
}

/// Writes a tied-down sheet into `buf` (row-major, `(G_s+1) × (G_t+1)`).
fn fill_path<R: Rng>(g_s: usize, g_t: usize, rng: &mut R, buf: &mut Vec<f64>) {
    let w = g_t + 1;
    buf.clear();
    buf.resize((g_s + 1) * w, 0.0);
    let sd = 1.0 / ((g_s * g_t) as f64).sqrt();
    for i in 1..=g_s {
        let (prev, cur) = buf.split_at_mut(i * w);
        let prev = &prev[(i - 1) * w..];
        let cur = &mut cur[..w];
        let mut run = 0.0;
        for k in 1..=g_t {
            let z: f64 = rng.sample(StandardNormal);
            run += z * sd;
            cur[k] = prev[k] + run;
        }
    }
    let top: Vec<f64> = buf[g_s * w..].to_vec();
    for i in 1..=g_s {
        let s = i as f64 / g_s as f64;
        let row = &mut buf[i * w..(i + 1) * w];
        for k in 1..=g_t {
            row[k] -= s * top[k];
        }
    }
    // exact tie-down at s = 1
    for v in &mut buf[g_s * w..] {
        *v = 0.0;
    }
}

/// All six functionals of a path at once, in [`FunctionalKind::ALL`] order.
fn all_functionals(g_s: usize, g_t: usize, v: &[f64]) -> [f64; 6] {
    let w = g_t + 1;
    let mut sup = 0.0_f64;
    let mut col_sq = vec![0.0; w];
    let mut best_row_int = 0.0_f64;
    let mut int_int = 0.0;
    let mut margin_sup = 0.0_f64;
    let mut margin_sq = 0.0;
    for i in 0..=g_s {
        let row = &v[i * w..(i + 1) * w];
        let mut row_sq = 0.0;
        for k in 1..=g_t {
            let x = row[k];
            sup = sup.max(x.abs());
            row_sq += x * x;
            if i < g_s {
                col_sq[k] += x * x;
            }
        }
        let row_int = row_sq / g_t as f64;
        best_row_int = best_row_int.max(row_int);
        if i < g_s {
            int_int += row_int;
            margin_sq += row[g_t] * row[g_t];
        }
        margin_sup = margin_sup.max(row[g_t].abs());
    }
    let inv_s = 1.0 / g_s as f64;
    let sup_t_int_s = col_sq[1..].iter().fold(0.0_f64, |m, &c| m.max(c * inv_s));
    [
        sup,
        sup_t_int_s,
        best_row_int,
        int_int * inv_s,
        margin_sup,
        margin_sq * inv_s,
    ]
}

/// Evaluates a limit functional on a path. s-integrals use the left
/// endpoints `i = 0..G_s-1`, t-integrals the right endpoints
/// `k = 1..G_t`, mirroring the statistics' step sums and empirical
/// averages.
pub fn functional_of_path<T: Scalar>(path: &KieferGrid<T>, kind: FunctionalKind) -> T {
    let v: Vec<f64> = path.values.iter().map(|x| x.as_f64()).collect();
    let all = all_functionals(path.g_s, path.g_t, &v);
    let idx = FunctionalKind::ALL
        .iter()
        .position(|&k| k == kind)
        .expect("listed kind");
    T::lit(all[idx])
}

/// `sup_s |K₀(s, t_k)| / √t_k`, a Brownian-bridge supremum for any fixed
/// `t_k = k / G_t > 0`.
pub fn bridge_slice_sup<T: Scalar>(path: &KieferGrid<T>, k: usize) -> T {
    assert!(k >= 1 && k <= path.g_t);
    let t = T::from_count(k) / T::from_count(path.g_t);
    let m = (0..=path.g_s)
        .map(|i| path.at(i, k).abs())
        .fold(T::zero(), T::max);
    m / t.sqrt()
}

/// Empirical quantile table of a limit functional.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalTable {
    pub kind: FunctionalKind,
    pub replications: usize,
    pub g_s: usize,
    pub g_t: usize,
    pub seed: u64,
    /// `(level, value)` pairs computed from all draws.
    pub quantiles: Vec<(f64, f64)>,
    /// Sorted draws, or evenly spaced order statistics when there are more
    /// than [`STORED_DRAWS`].
    pub draws: Vec<f64>,
}

/// Inverse empirical CDF: the `⌈p·m⌉`-th smallest of `m` sorted values.
pub fn order_statistic_quantile(sorted: &[f64], p: f64) -> f64 {
    let m = sorted.len();
    let rank = ((p * m as f64).ceil() as usize).clamp(1, m);
    sorted[rank - 1]
}

impl CriticalTable {
    fn from_draws(
        kind: FunctionalKind,
        mut draws: Vec<f64>,
        levels: &[f64],
        g_s: usize,
        g_t: usize,
        seed: u64,
    ) -> Self {
        draws.sort_by(f64::total_cmp);
        let r = draws.len();
        let mut levels = levels.to_vec();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        let quantiles = levels
            .iter()
            .map(|&p| (p, order_statistic_quantile(&draws, p)))
            .collect();
        let stored = if r > STORED_DRAWS {
            (0..STORED_DRAWS)
                .map(|j| {
                    draws
                        [((j as f64) * (r - 1) as f64 / (STORED_DRAWS - 1) as f64).round() as usize]
                })
                .collect()
        } else {
            draws
        };
        Self {
            kind,
            replications: r,
            g_s,
            g_t,
            seed,
            quantiles,
            draws: stored,
        }
    }

    /// Quantile at `level`: exact when tabulated, otherwise from the stored
    /// order statistics.
    pub fn quantile(&self, level: f64) -> f64 {
        self.quantiles
            .iter()
            .find(|(p, _)| (p - level).abs() < 1e-12)
            .map(|&(_, q)| q)
            .unwrap_or_else(|| order_statistic_quantile(&self.draws, level))
    }

    /// Fraction of stored draws strictly exceeding `value`.
    pub fn exceedance(&self, value: f64) -> f64 {
        let below = self.draws.partition_point(|&d| d <= value);
        (self.draws.len() - below) as f64 / self.draws.len() as f64
    }
}

fn check_replications(r: usize) -> Result<()> {
    if r < 1000 {
        return Err(Error::Contract(format!(
            "at least 1000 replications are required, got {r}"
        )));
    }
    Ok(())
}

/// Simulates `replications` paths and tabulates every functional in
/// `kinds` from the same draws. Replication `r` uses stream `r` of the
/// master seed, so the result does not depend on the thread count.
pub fn build_critical_tables(
    kinds: &[FunctionalKind],
    levels: &[f64],
    replications: usize,
    g_s: usize,
    g_t: usize,
    seed: u64,
) -> Result<Vec<CriticalTable>> {
    check_replications(replications)?;
    check_resolution(g_s, g_t)?;
    let draws: Vec<[f64; 6]> = (0..replications as u64)
        .into_par_iter()
        .map_init(Vec::new, |buf, r| {
            let mut rng = stream(seed, Domain::Kiefer, r);
            fill_path(g_s, g_t, &mut rng, buf);
            all_functionals(g_s, g_t, buf)
        })
        .collect();
    Ok(kinds
        .iter()
        .map(|&kind| {
            let idx = FunctionalKind::ALL
                .iter()
                .position(|&k| k == kind)
                .expect("listed kind");
            let col = draws.iter().map(|d| d[idx]).collect();
            CriticalTable::from_draws(kind, col, levels, g_s, g_t, seed)
        })
        .collect())
}

pub fn build_critical_table(
    kind: FunctionalKind,
    levels: &[f64],
    replications: usize,
    g_s: usize,
    g_t: usize,
    seed: u64,
) -> Result<CriticalTable> {
    Ok(build_critical_tables(&[kind], levels, replications, g_s, g_t, seed)?.remove(0))
}

/// Brownian-bridge suprema `sup_s |K₀(s, t)|/√t` at `t = 1 − 1/G_t`, one
/// per simulated path.
pub fn bridge_slice_draws(
    replications: usize,
    g_s: usize,
    g_t: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_resolution(g_s, g_t)?;
    let k = g_t - 1;
    let t = k as f64 / g_t as f64;
    let w = g_t + 1;
    Ok((0..replications as u64)
        .into_par_iter()
        .map_init(Vec::new, |buf, r| {
            let mut rng = stream(seed, Domain::Kiefer, r);
            fill_path(g_s, g_t, &mut rng, buf);
            (0..=g_s)
                .map(|i| buf[i * w + k].abs())
                .fold(0.0_f64, f64::max)
                / t.sqrt()
        })
        .collect())
}

/// Outcome of comparing a normalized statistic with its limit table.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticDecision {
    pub reject: bool,
    pub critical_value: f64,
    /// Fraction of tabulated draws above the observed value. When no draw
    /// exceeds it this is `1/R` and `p_value_is_bound` is set: the true
    /// value is below it.
    pub p_value: f64,
    pub p_value_is_bound: bool,
}

/// Rejects when the normalized statistic exceeds the `(1−α)` quantile.
pub fn asymptotic_decision<T: Scalar>(
    stat: &StatisticValue<T>,
    table: &CriticalTable,
    alpha: f64,
) -> Result<AsymptoticDecision> {
    if FunctionalKind::for_statistic(stat.kind) != table.kind {
        return Err(Error::Contract(format!(
            "statistic {} does not match table {:?}",
            stat.kind, table.kind
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidInput(format!("level {alpha} outside (0, 1)")));
    }
    let value = stat
        .normalized
        .ok_or_else(|| Error::Contract(format!("{} has not been normalized", stat.kind)))?
        .as_f64();
    let critical_value = table.quantile(1.0 - alpha);
    let exceed = table.exceedance(value);
    let (p_value, p_value_is_bound) = if exceed == 0.0 {
        (1.0 / table.replications as f64, true)
    } else {
        (exceed, false)
    };
    Ok(AsymptoticDecision {
        reject: value > critical_value,
        critical_value,
        p_value,
        p_value_is_bound,
    })
}

/// Serialized collection of tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalTableSet {
    pub format: String,
    pub version: u32,
    pub tables: Vec<CriticalTable>,
}

pub const TABLE_FORMAT: &str = "mcusum-critical-tables";
pub const TABLE_VERSION: u32 = 1;

impl CriticalTableSet {
    pub fn new(tables: Vec<CriticalTable>) -> Self {
        Self {
            format: TABLE_FORMAT.into(),
            version: TABLE_VERSION,
            tables,
        }
    }

    pub fn get(&self, kind: FunctionalKind) -> Option<&CriticalTable> {
        self.tables.iter().find(|t| t.kind == kind)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(text)?;
        if set.format != TABLE_FORMAT || set.version != TABLE_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported critical-table file `{}` version {}",
                set.format, set.version
            )));
        }
        Ok(set)
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// Parameters of the bundled tables.
pub const DEFAULT_REPLICATIONS: usize = 100_000;
pub const DEFAULT_RESOLUTION: usize = 512;
pub const DEFAULT_SEED: u64 = 20_190_101;

static BUNDLED: OnceLock<CriticalTableSet> = OnceLock::new();

/// Tables shipped with the crate (all six functionals).
pub fn bundled_tables() -> &'static CriticalTableSet {
    BUNDLED.get_or_init(|| {
        CriticalTableSet::from_json(include_str!("../data/critical_tables.json"))
            .expect("bundled critical tables are well-formed")
    })
}
