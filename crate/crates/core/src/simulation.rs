//! Simulation models with a regression break at `⌊n/2⌋` and a Monte Carlo
//! runner for rejection frequencies.
//!
//! All recursions start at zero and run a burn-in (500 steps by default)
//! under the pre-break regime before the recorded sample begins.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limit::CriticalTableSet;
use crate::pipeline::{evaluate, PipelineOptions, TestMode};
use crate::regression::Sample;
use crate::rng::{derive_seed, stream, Domain};
use crate::statistics::StatisticKind;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelId {
    /// Regression on an exogenous AR(1) covariate, break in
    /// `Δ₀ e^{-0.8x²} x`.
    Model1,
    Model2Homo,
    Model2Hetero,
    /// AR(1) with a slope break and a variance break at `⌊n t₀⌋`.
    Model3,
    Model4Ar2,
    Model4Ar2Arch1,
    Model4Ar2Arch2,
}

impl ModelId {
    pub const ALL: [ModelId; 7] = [
        ModelId::Model1,
        ModelId::Model2Homo,
        ModelId::Model2Hetero,
        ModelId::Model3,
        ModelId::Model4Ar2,
        ModelId::Model4Ar2Arch1,
        ModelId::Model4Ar2Arch2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelId::Model1 => "model1",
            ModelId::Model2Homo => "model2_homo",
            ModelId::Model2Hetero => "model2_hetero",
            ModelId::Model3 => "model3",
            ModelId::Model4Ar2 => "model4_ar2",
            ModelId::Model4Ar2Arch1 => "model4_ar2arch1",
            ModelId::Model4Ar2Arch2 => "model4_ar2arch2",
        }
    }

    /// Covariate dimension of the generated sample.
    pub fn dim(self) -> usize {
        match self {
            ModelId::Model4Ar2 | ModelId::Model4Ar2Arch1 | ModelId::Model4Ar2Arch2 => 2,
            _ => 1,
        }
    }

    /// Regression function; `post` selects the post-break branch.
    pub fn mean(self, x: &[f64], delta0: f64, post: bool) -> f64 {
        let d = if post { delta0 } else { 0.0 };
        match self {
            ModelId::Model1 => (0.5 + d * (-0.8 * x[0] * x[0]).exp()) * x[0],
            ModelId::Model2Homo | ModelId::Model2Hetero => (-0.9 + d) * x[0],
            ModelId::Model3 => (0.9 - d) * x[0],
            ModelId::Model4Ar2 | ModelId::Model4Ar2Arch1 | ModelId::Model4Ar2Arch2 => {
                (0.9 - d) * x[0] - 0.4 * x[1]
            }
        }
    }

    /// Conditional variance; `post` selects model 3's second regime.
    pub fn variance(self, x: &[f64], post: bool) -> f64 {
        match self {
            ModelId::Model1 => 1.0 + 0.5 * x[0] * x[0],
            ModelId::Model2Homo | ModelId::Model4Ar2 => 1.0,
            ModelId::Model2Hetero => 1.0 + 0.1 * x[0] * x[0],
            ModelId::Model3 => {
                if post {
                    1.0 + 0.8 * x[0] * x[0]
                } else {
                    1.0 + 0.1 * x[0] * x[0]
                }
            }
            ModelId::Model4Ar2Arch1 => 1.0 + 0.4 * x[0] * x[0],
            ModelId::Model4Ar2Arch2 => 1.0 + 0.2 * x[0] * x[0] + 0.2 * x[1] * x[1],
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s
            .to_ascii_lowercase()
            .replace(['-', ' '], "_")
            .replace("(", "")
            .replace(")", "");
        ModelId::ALL
            .into_iter()
            .find(|m| m.name() == key)
            .ok_or_else(|| Error::InvalidInput(format!("unknown model `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model: ModelId,
    pub n: usize,
    pub delta0: f64,
    /// Variance-break fraction (model 3).
    pub t0: f64,
    pub burn_in: usize,
    pub seed: u64,
}

pub const DEFAULT_BURN_IN: usize = 500;

impl ModelSpec {
    pub fn new(model: ModelId, n: usize, delta0: f64) -> Self {
        Self {
            model,
            n,
            delta0,
            t0: 0.5,
            burn_in: DEFAULT_BURN_IN,
            seed: 1,
        }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn with_t0(self, t0: f64) -> Self {
        Self { t0, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Contract(format!("sample size {} too small", self.n)));
        }
        if !self.delta0.is_finite() {
            return Err(Error::Contract("break size must be finite".into()));
        }
        if !(self.t0 > 0.0 && self.t0 < 1.0) {
            return Err(Error::Contract(format!("t0 = {} outside (0, 1)", self.t0)));
        }
        Ok(())
    }

    /// Last index (1-based) of the pre-break regression regime.
    pub fn mean_break(&self) -> usize {
        self.n / 2
    }

    /// Last index of the first variance regime (model 3).
    pub fn variance_break(&self) -> usize {
        (self.n as f64 * self.t0).floor() as usize
    }
}

/// Draws a sample from the model. Autoregressions are lag-embedded
/// (`X_t = (Y_{t-1}, …, Y_{t-d})`), model 1 uses its exogenous covariate.
pub fn generate(spec: &ModelSpec) -> Result<Sample<f64>> {
    generate_with_break(spec, spec.mean_break())
}

/// As [`generate`] with the regression switching after `mean_break`
/// instead of `⌊n/2⌋`.
pub fn generate_with_break(spec: &ModelSpec, mean_break: usize) -> Result<Sample<f64>> {
    spec.validate()?;
    let mut eps = stream(spec.seed, Domain::Innovations, 0);
    let normal = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let model = spec.model;
    let var_break = spec.variance_break();
    let (n, b) = (spec.n, spec.burn_in);
    let mut xs = Vec::with_capacity(n * model.dim());
    let mut ys = Vec::with_capacity(n);

    if model == ModelId::Model1 {
        let mut xi = stream(spec.seed, Domain::Covariates, 0);
        let mut x = 0.0;
        for _ in 0..b {
            x = 0.4 * x + normal(&mut xi);
        }
        for t in 1..=n {
            x = 0.4 * x + normal(&mut xi);
            let m = model.mean(&[x], spec.delta0, t > mean_break);
            let y = m + model.variance(&[x], false).sqrt() * normal(&mut eps);
            xs.push(x);
            ys.push(y);
        }
    } else {
        let p = model.dim();
        // most recent value first
        let mut lags = vec![0.0; p];
        for step in 0..b + n {
            let t = step as i64 - b as i64 + 1;
            let post_mean = t > mean_break as i64;
            let post_var = t > var_break as i64;
            let y = model.mean(&lags, spec.delta0, post_mean)
                + model.variance(&lags, post_var).sqrt() * normal(&mut eps);
            if t >= 1 {
                xs.extend_from_slice(&lags);
                ys.push(y);
            }
            lags.rotate_right(1);
            lags[0] = y;
        }
    }
    Sample::new(xs, model.dim(), ys)
}

/// Synthetic stand-in for an annual rainfall/flow record: 36 years
/// (1954–1989) whose flow-on-rainfall relation shifts after 1979.
/// Returns `(years, rainfall, flow)`.
pub fn river_standin(seed: u64) -> (Vec<i32>, Vec<f64>, Vec<f64>) {
    let mut rng = stream(seed, Domain::Covariates, 0);
    let mut noise = stream(seed, Domain::Innovations, 0);
    let years: Vec<i32> = (1954..=1989).collect();
    let mut rain = Vec::with_capacity(36);
    let mut flow = Vec::with_capacity(36);
    for &year in &years {
        let r: f64 = 700.0 + 120.0 * rng.sample::<f64, _>(StandardNormal);
        let base = 0.45 * r - 60.0;
        let shift = if year > 1979 { -55.0 } else { 0.0 };
        flow.push(base + shift + 12.0 * noise.sample::<f64, _>(StandardNormal));
        rain.push(r);
    }
    (years, rain, flow)
}

/// Settings of a Monte Carlo experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub replications: usize,
    pub pipeline: PipelineOptions,
    pub master_seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RejectionRate {
    pub kind: StatisticKind,
    pub rejections: usize,
    pub frequency: f64,
    /// `√(p̂(1−p̂)/R)` over completed replications.
    pub standard_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub spec: ModelSpec,
    pub mode: TestMode,
    pub alpha: f64,
    pub bootstrap_replications: usize,
    pub replications: usize,
    /// Replications whose pipeline failed (for example no usable
    /// bandwidth); frequencies are taken over the remaining ones.
    pub failures: usize,
    pub rates: Vec<RejectionRate>,
    /// Estimated change-point fraction per replication (`None` on failure).
    pub s_hat: Vec<Option<f64>>,
    /// Normalized `T_n1` per replication, when available.
    pub normalized_tn1: Vec<Option<f64>>,
    pub master_seed: u64,
    pub wall_clock_seconds: f64,
}

impl ExperimentResult {
    pub fn rate(&self, kind: StatisticKind) -> Option<&RejectionRate> {
        self.rates.iter().find(|r| r.kind == kind)
    }

    pub fn frequency(&self, kind: StatisticKind) -> Option<f64> {
        self.rate(kind).map(|r| r.frequency)
    }
}

struct Replicate {
    rejects: Vec<bool>,
    s_hat: f64,
    tn1: Option<f64>,
}

/// Draws `R` independent samples and runs the full pipeline on each
/// (bandwidth chosen afresh per draw). Replication `r` derives its data
/// and bootstrap seeds from `(master_seed, r)`.
pub fn run_experiment(
    spec: &ModelSpec,
    cfg: &ExperimentConfig,
    tables: Option<&CriticalTableSet>,
) -> Result<ExperimentResult> {
    if cfg.replications == 0 {
        return Err(Error::Contract(
            "at least one replication is required".into(),
        ));
    }
    spec.validate()?;
    let started = Instant::now();
    let kinds = cfg.pipeline.statistics.clone();
    let outcomes: Vec<Option<Replicate>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| {
            let rep_seed = derive_seed(cfg.master_seed, Domain::Replication, r);
            let sample = generate(&spec.with_seed(rep_seed)).ok()?;
            let opts = PipelineOptions {
                seed: derive_seed(rep_seed, Domain::Multipliers, 0),
                ..cfg.pipeline.clone()
            };
            let out = evaluate(&sample, &opts, tables).ok()?;
            Some(Replicate {
                rejects: out.statistics.iter().map(|s| s.reject).collect(),
                s_hat: out.changepoint.s_hat,
                tn1: out.get(StatisticKind::Tn1).and_then(|s| s.normalized),
            })
        })
        .collect();
    let done: Vec<&Replicate> = outcomes.iter().flatten().collect();
    let failures = cfg.replications - done.len();
    let m = done.len();
    let rates = kinds
        .iter()
        .enumerate()
        .map(|(j, &kind)| {
            let rejections = done.iter().filter(|o| o.rejects[j]).count();
            let frequency = if m > 0 {
                rejections as f64 / m as f64
            } else {
                f64::NAN
            };
            let standard_error = if m > 0 {
                (frequency * (1.0 - frequency) / m as f64).sqrt()
            } else {
                f64::NAN
            };
            RejectionRate {
                kind,
                rejections,
                frequency,
                standard_error,
            }
        })
        .collect();
    Ok(ExperimentResult {
        spec: *spec,
        mode: cfg.pipeline.mode,
        alpha: cfg.pipeline.alpha,
        bootstrap_replications: cfg.pipeline.bootstrap_replications,
        replications: cfg.replications,
        failures,
        rates,
        s_hat: outcomes
            .iter()
            .map(|o| o.as_ref().map(|o| o.s_hat))
            .collect(),
        normalized_tn1: outcomes
            .iter()
            .map(|o| o.as_ref().and_then(|o| o.tn1))
            .collect(),
        master_seed: cfg.master_seed,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
    })
}

/// Writes results as table rows: one row per experiment, a frequency and a
/// standard-error column per statistic. Wall-clock time is omitted so that
/// the file is reproducible. All results must share the statistic list.
pub fn write_experiment_csv<W: Write>(results: &[ExperimentResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let Some(first) = results.first() else {
        return Ok(());
    };
    let kinds: Vec<StatisticKind> = first.rates.iter().map(|r| r.kind).collect();
    let mut header: Vec<String> = [
        "model",
        "n",
        "delta0",
        "t0",
        "burn_in",
        "mode",
        "alpha",
        "R",
        "B",
        "failures",
        "master_seed",
    ]
    .map(String::from)
    .to_vec();
    for k in &kinds {
        header.push(k.name().to_string());
        header.push(format!("{}_se", k.name()));
    }
    w.write_record(&header)?;
    for res in results {
        if res.rates.iter().map(|r| r.kind).ne(kinds.iter().copied()) {
            return Err(Error::InvalidInput(
                "experiments report different statistics".into(),
            ));
        }
        let mut row = vec![
            res.spec.model.to_string(),
            res.spec.n.to_string(),
            res.spec.delta0.to_string(),
            res.spec.t0.to_string(),
            res.spec.burn_in.to_string(),
            res.mode.to_string(),
            res.alpha.to_string(),
            res.replications.to_string(),
            res.bootstrap_replications.to_string(),
            res.failures.to_string(),
            res.master_seed.to_string(),
        ];
        for r in &res.rates {
            row.push(format!("{:.3}", r.frequency));
            row.push(format!("{:.4}", r.standard_error));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lag1_autocorrelation(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let num: f64 = v.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
        let den: f64 = v.iter().map(|x| (x - m) * (x - m)).sum();
        num / den
    }

    #[test]
    fn model2_is_an_ar1_with_coefficient_minus_09() {
        let s = generate(&ModelSpec::new(ModelId::Model2Homo, 10_000, 0.0).with_seed(5)).unwrap();
        let r = lag1_autocorrelation(s.y());
        assert!((r + 0.9).abs() < 0.02, "{r}");
        // lag embedding: X_t = Y_{t-1}
        for t in 1..s.n() {
            assert_eq!(s.row(t)[0], s.y()[t - 1]);
        }
    }

    #[test]
    fn model1_covariate_is_ar1_with_coefficient_04() {
        let s = generate(&ModelSpec::new(ModelId::Model1, 10_000, 0.0).with_seed(6)).unwrap();
        let r = lag1_autocorrelation(&s.column(0));
        assert!((r - 0.4).abs() < 0.02, "{r}");
    }

    #[test]
    fn no_break_size_means_no_break() {
        for model in ModelId::ALL {
            let spec = ModelSpec::new(model, 200, 0.0).with_seed(8);
            let a = generate(&spec).unwrap();
            let b = generate_with_break(&spec, 0).unwrap();
            assert_eq!(a, b, "{model}");
        }
        let spec = ModelSpec::new(ModelId::Model2Homo, 200, 1.0).with_seed(8);
        assert_ne!(
            generate(&spec).unwrap(),
            generate_with_break(&spec, 0).unwrap()
        );
    }

    #[test]
    fn model4_is_bivariate() {
        let s = generate(&ModelSpec::new(ModelId::Model4Ar2Arch2, 50, 1.3)).unwrap();
        assert_eq!((s.n(), s.d()), (50, 2));
        for t in 2..50 {
            assert_eq!(s.row(t), &[s.y()[t - 1], s.y()[t - 2]]);
        }
    }

    #[test]
    fn model1_break_integrates_to_zero_against_the_stationary_law() {
        // The break Δ₀ e^{-0.8x²} x is odd and the stationary density of the
        // covariate is symmetric, so the CUSUM drift vanishes.
        let g = |x: f64| 4.0 * (-0.8 * x * x).exp() * x;
        let var = 1.0 / (1.0 - 0.16);
        let dens =
            |x: f64| (-x * x / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt();
        let (a, b, m) = (-12.0, 12.0, 4000);
        let step = (b - a) / m as f64;
        let mut total = 0.0;
        for i in 0..=m {
            let x = a + i as f64 * step;
            let w = if i == 0 || i == m {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            total += w * g(x) * dens(x);
        }
        assert!((total * step / 3.0).abs() < 1e-12);

        let s = generate(&ModelSpec::new(ModelId::Model1, 100_000, 0.0).with_seed(2)).unwrap();
        let xs = s.column(0);
        let mean = xs.iter().map(|&x| g(x)).sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|&x| g(x).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
            / (xs.len() as f64).sqrt();
        assert!(mean.abs() < 4.0 * sd, "{mean} vs {sd}");
    }

    #[test]
    fn model_names_round_trip() {
        for m in ModelId::ALL {
            assert_eq!(m.name().parse::<ModelId>().unwrap(), m);
        }
        assert!(ModelSpec::new(ModelId::Model3, 100, 0.0)
            .with_t0(1.0)
            .validate()
            .is_err());
    }

    #[test]
    fn river_standin_shape() {
        let (years, rain, flow) = river_standin(1);
        assert_eq!(years.len(), 36);
        assert_eq!((years[0], years[35]), (1954, 1989));
        assert_eq!(rain.len(), flow.len());
    }
}
