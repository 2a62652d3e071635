//! Nonparametric change-point tests for regression and autoregression
//! functions based on the sequential marked empirical process of kernel
//! regression residuals,
//!
//! ```text
//! T̂_n(s, z) = n^{-1/2} Σ_{i ≤ ⌊ns⌋} Û_i ω(X_i) 1{X_i ≤ z}.
//! ```
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix `f64`, which is what the pipeline and the CLI use.
//!
//! ```
//! use mcusum::{evaluate, PipelineOptions, Sample};
//!
//! let x: Vec<f64> = (0..60).map(|i| (i as f64 * 0.7).sin()).collect();
//! let y: Vec<f64> = x.iter().enumerate().map(|(i, v)| if i < 30 { *v } else { -v }).collect();
//! let out = evaluate(&Sample::univariate(x, y).unwrap(), &PipelineOptions::default(), None).unwrap();
//! assert_eq!(out.n, 60);
//! ```

pub mod bootstrap;
pub mod error;
pub mod io;
pub mod kernel;
pub mod limit;
pub mod pipeline;
pub mod process;
pub mod regression;
pub mod rng;
pub mod scalar;
pub mod simulation;
pub mod statistics;

pub use bootstrap::{BootstrapConfig, MultiplierFamily};
pub use error::{Error, Result};
pub use io::{analyze, AnalysisConfig, ColumnMapping, TestReport};
pub use kernel::{KernelSpec, Profile};
pub use limit::{CriticalTableSet, FunctionalKind};
pub use pipeline::{evaluate, BandwidthRule, PipelineOptions, TestMode, WindowRule};
pub use scalar::Scalar;
pub use simulation::{ExperimentConfig, ModelId, ModelSpec};
pub use statistics::StatisticKind;

pub type Sample = regression::Sample<f64>;
pub type FitState = regression::FitState<f64>;
pub type WeightWindow = regression::WeightWindow<f64>;
pub type ProcessGrid = process::ProcessGrid<f64>;
pub type Functionals = process::Functionals<f64>;
pub type StatisticValue = statistics::StatisticValue<f64>;
pub type ChangePointEstimate = statistics::ChangePointEstimate<f64>;
pub type BootstrapRun = bootstrap::BootstrapRun<f64>;
pub type KieferGrid = limit::KieferGrid<f64>;
