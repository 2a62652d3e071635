//! Command-line flags and their config-file equivalents.
//!
//! Every subcommand reads an optional TOML file (`--config`) whose keys
//! match the long flag names with `_` in place of `-`. Flags given on the
//! command line replace the corresponding file values.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use mcusum::limit::{DEFAULT_LEVELS, DEFAULT_REPLICATIONS, DEFAULT_RESOLUTION, DEFAULT_SEED};
use mcusum::simulation::DEFAULT_BURN_IN;
use mcusum::{
    AnalysisConfig, BandwidthRule, FunctionalKind, ModelId, ModelSpec, MultiplierFamily,
    PipelineOptions, Profile, StatisticKind, TestMode, WindowRule,
};

use crate::ConfigArg;

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text =
                std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}

/// Options shared by `test` and `experiment`.
#[derive(Args, Debug, Clone, Default)]
pub struct PipelineFlags {
    /// Kernel profile (epanechnikov4, epanechnikov, biweight).
    #[arg(long)]
    pub kernel: Option<Profile>,
    /// Bandwidth: `cv` or a positive number.
    #[arg(long)]
    pub bandwidth: Option<BandwidthRule>,
    /// Weight window between the marginal tau and 1-tau quantiles.
    #[arg(long, conflicts_with = "window_box")]
    pub window_tau: Option<f64>,
    /// Weight window [-c, c]^d.
    #[arg(long)]
    pub window_box: Option<f64>,
    /// Comma-separated statistics; the first one decides the exit status.
    #[arg(long, value_delimiter = ',')]
    pub statistics: Option<Vec<StatisticKind>>,
    /// asymptotic or bootstrap.
    #[arg(long)]
    pub mode: Option<TestMode>,
    /// Significance level.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Bootstrap replications B.
    #[arg(long, short = 'B')]
    pub bootstrap_replications: Option<usize>,
    /// Bootstrap multipliers (rademacher, mammen, normal).
    #[arg(long)]
    pub multiplier: Option<MultiplierFamily>,
}

impl PipelineFlags {
    fn apply(self, p: &mut PipelineOptions) {
        set(&mut p.kernel, self.kernel);
        set(&mut p.bandwidth, self.bandwidth);
        set(
            &mut p.window,
            self.window_tau.map(|tau| WindowRule::Quantile { tau }),
        );
        set(
            &mut p.window,
            self.window_box
                .map(|half_width| WindowRule::Box { half_width }),
        );
        set(&mut p.statistics, self.statistics);
        set(&mut p.mode, self.mode);
        set(&mut p.alpha, self.alpha);
        set(&mut p.bootstrap_replications, self.bootstrap_replications);
        set(&mut p.multiplier, self.multiplier);
    }
}

#[derive(Args, Debug, Clone)]
pub struct AnalysisFlags {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Input CSV with a header row.
    pub input: Option<PathBuf>,
    /// Response column.
    #[arg(long, short = 'y')]
    pub response: Option<String>,
    /// Comma-separated covariate columns.
    #[arg(long, short = 'x', value_delimiter = ',', conflicts_with = "lag_order")]
    pub covariates: Option<Vec<String>>,
    /// Use the response's own lags 1..=p as covariates.
    #[arg(long, short = 'p')]
    pub lag_order: Option<usize>,
    /// Column used to label observations in the report.
    #[arg(long)]
    pub time_column: Option<String>,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
    /// Bootstrap seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report path (JSON); standard output when omitted.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
    /// Per-observation trace CSV.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    /// Critical-table file from `mcusum quantiles`.
    #[arg(long)]
    pub tables: Option<PathBuf>,
}

impl AnalysisFlags {
    pub fn resolve(self) -> Result<AnalysisConfig> {
        let mut c: AnalysisConfig = load(self.config.config.as_deref())?;
        set(&mut c.input, self.input);
        set(&mut c.columns.response, self.response);
        if self.covariates.is_some() {
            c.columns.covariates = self.covariates;
            c.columns.lag_order = None;
        }
        if self.lag_order.is_some() {
            c.columns.lag_order = self.lag_order;
            c.columns.covariates = None;
        }
        if self.time_column.is_some() {
            c.columns.time_column = self.time_column;
        }
        self.pipeline.apply(&mut c.pipeline);
        set(&mut c.pipeline.seed, self.seed);
        if self.output.is_some() {
            c.output = self.output;
        }
        if self.trace.is_some() {
            c.trace = self.trace;
        }
        if self.tables.is_some() {
            c.tables = self.tables;
        }
        if c.input.as_os_str().is_empty() {
            bail!("no input file given");
        }
        c.columns.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateFile {
    model: Option<ModelId>,
    n: Option<usize>,
    delta0: Option<f64>,
    t0: Option<f64>,
    burn_in: Option<usize>,
    seed: Option<u64>,
    output: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SimulateFlags {
    #[command(flatten)]
    pub config: ConfigArg,
    /// model1 .. model4_ar2arch1.
    #[arg(long, short = 'm')]
    pub model: Option<ModelId>,
    #[arg(long, short = 'n')]
    pub n: Option<usize>,
    /// Size of the change (0 simulates the null).
    #[arg(long)]
    pub delta0: Option<f64>,
    /// Variance-break fraction.
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV; standard output when omitted.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

impl SimulateFlags {
    pub fn resolve(self) -> Result<(ModelSpec, Option<PathBuf>)> {
        let mut f: SimulateFile = load(self.config.config.as_deref())?;
        if self.model.is_some() {
            f.model = self.model;
        }
        let Some(model) = f.model else {
            bail!("no model given")
        };
        let Some(n) = self.n.or(f.n) else {
            bail!("no sample size given")
        };
        let mut spec = ModelSpec::new(model, n, self.delta0.or(f.delta0).unwrap_or(0.0));
        set(&mut spec.t0, self.t0.or(f.t0));
        set(&mut spec.burn_in, self.burn_in.or(f.burn_in));
        set(&mut spec.seed, self.seed.or(f.seed));
        spec.validate()?;
        Ok((spec, self.output.or(f.output)))
    }
}

/// Resolved `experiment` settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSettings {
    pub model: Option<ModelId>,
    pub n: Vec<usize>,
    pub delta0: Vec<f64>,
    pub t0: f64,
    pub burn_in: usize,
    pub replications: usize,
    /// Master seed.
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Full results as JSON.
    pub json: Option<PathBuf>,
    pub tables: Option<PathBuf>,
    #[serde(flatten)]
    pub pipeline: PipelineOptions,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        Self {
            model: None,
            n: Vec::new(),
            delta0: vec![0.0],
            t0: 0.5,
            burn_in: DEFAULT_BURN_IN,
            replications: 200,
            seed: 1,
            output: None,
            json: None,
            tables: None,
            pipeline: PipelineOptions::default(),
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ExperimentFlags {
    #[command(flatten)]
    pub config: ConfigArg,
    #[arg(long, short = 'm')]
    pub model: Option<ModelId>,
    /// Comma-separated sample sizes.
    #[arg(long, short = 'n', value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    /// Comma-separated change sizes.
    #[arg(long, value_delimiter = ',')]
    pub delta0: Option<Vec<f64>>,
    #[arg(long)]
    pub t0: Option<f64>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Monte Carlo replications R per cell.
    #[arg(long, short = 'R')]
    pub replications: Option<usize>,
    #[command(flatten)]
    pub pipeline: PipelineFlags,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rejection-rate CSV; standard output when omitted.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub json: Option<PathBuf>,
    #[arg(long)]
    pub tables: Option<PathBuf>,
}

impl ExperimentFlags {
    pub fn resolve(self) -> Result<ExperimentSettings> {
        let mut s: ExperimentSettings = load(self.config.config.as_deref())?;
        if self.model.is_some() {
            s.model = self.model;
        }
        set(&mut s.n, self.n);
        set(&mut s.delta0, self.delta0);
        set(&mut s.t0, self.t0);
        set(&mut s.burn_in, self.burn_in);
        set(&mut s.replications, self.replications);
        self.pipeline.apply(&mut s.pipeline);
        set(&mut s.seed, self.seed);
        if self.output.is_some() {
            s.output = self.output;
        }
        if self.json.is_some() {
            s.json = self.json;
        }
        if self.tables.is_some() {
            s.tables = self.tables;
        }
        if s.model.is_none() {
            bail!("no model given");
        }
        if s.n.is_empty() || s.delta0.is_empty() {
            bail!("need at least one sample size and one delta0");
        }
        Ok(s)
    }
}

/// Resolved `quantiles` settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantileSettings {
    /// Functionals to tabulate; all of them when empty.
    pub kinds: Vec<FunctionalKind>,
    pub levels: Vec<f64>,
    pub replications: usize,
    pub resolution: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
}

impl Default for QuantileSettings {
    fn default() -> Self {
        Self {
            kinds: Vec::new(),
            levels: DEFAULT_LEVELS.to_vec(),
            replications: DEFAULT_REPLICATIONS,
            resolution: DEFAULT_RESOLUTION,
            seed: DEFAULT_SEED,
            output: None,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct QuantileFlags {
    #[command(flatten)]
    pub config: ConfigArg,
    /// Comma-separated functionals or statistic names.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<FunctionalKind>>,
    /// Comma-separated levels in (0, 1).
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<f64>>,
    /// Simulated paths.
    #[arg(long, short = 'R')]
    pub replications: Option<usize>,
    /// Lattice points per axis.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output JSON; standard output when omitted.
    #[arg(long, short = 'o')]
    pub output: Option<PathBuf>,
}

impl QuantileFlags {
    pub fn resolve(self) -> Result<QuantileSettings> {
        let mut s: QuantileSettings = load(self.config.config.as_deref())?;
        set(&mut s.kinds, self.kinds);
        set(&mut s.levels, self.levels);
        set(&mut s.replications, self.replications);
        set(&mut s.resolution, self.resolution);
        set(&mut s.seed, self.seed);
        if self.output.is_some() {
            s.output = self.output;
        }
        Ok(s)
    }
}
