//! `mcusum` command-line front end.
//!
//! Exit status: 0 when the run finished without rejecting, 3 when the
//! primary (first listed) statistic rejected, 1 on any error.

mod settings;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use mcusum::io::{analyze, emit_trace, write_sample};
use mcusum::limit::{build_critical_tables, CriticalTableSet, FunctionalKind};
use mcusum::simulation::{
    generate, run_experiment, write_experiment_csv, ExperimentConfig, ModelSpec,
};

use settings::{
    AnalysisFlags, ExperimentFlags, ExperimentSettings, QuantileFlags, QuantileSettings,
    SimulateFlags,
};

const EXIT_REJECT: u8 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "mcusum",
    version,
    about = "Nonparametric change-point tests for time-series regression"
)]
struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true, env = "MCUSUM_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Test a data file for a change in the regression function.
    Test(AnalysisFlags),
    /// Draw a sample from one of the simulation models.
    Simulate(SimulateFlags),
    /// Estimate rejection frequencies by Monte Carlo.
    Experiment(ExperimentFlags),
    /// Rebuild the critical-value tables of the limit process.
    Quantiles(QuantileFlags),
}

#[derive(Args, Debug, Clone, Default)]
pub struct ConfigArg {
    /// TOML file with defaults; command-line flags take precedence.
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("thread count must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring worker threads")?;
    }
    match cli.command {
        Command::Test(flags) => cmd_test(flags),
        Command::Simulate(flags) => cmd_simulate(flags).map(|_| 0),
        Command::Experiment(flags) => cmd_experiment(flags).map(|_| 0),
        Command::Quantiles(flags) => cmd_quantiles(flags).map(|_| 0),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_test(flags: AnalysisFlags) -> Result<u8> {
    let config = flags.resolve()?;
    let report =
        analyze(&config).with_context(|| format!("analyzing {}", config.input.display()))?;
    let mut out = output(config.output.as_deref())?;
    out.write_all(report.to_json()?.as_bytes())?;
    out.flush()?;
    if let Some(path) = &config.trace {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        emit_trace(&report, BufWriter::new(file))?;
    }
    Ok(if report.primary_reject() {
        EXIT_REJECT
    } else {
        0
    })
}

fn cmd_simulate(flags: SimulateFlags) -> Result<()> {
    let (spec, out_path) = flags.resolve()?;
    let sample = generate(&spec)?;
    write_sample(&sample, output(out_path.as_deref())?)?;
    Ok(())
}

fn cmd_experiment(flags: ExperimentFlags) -> Result<()> {
    let s: ExperimentSettings = flags.resolve()?;
    let tables = s
        .tables
        .as_deref()
        .map(CriticalTableSet::read)
        .transpose()?;
    let model = s.model.context("no model given")?;
    let mut results = Vec::new();
    for &n in &s.n {
        for &delta0 in &s.delta0 {
            let spec = ModelSpec {
                model,
                n,
                delta0,
                t0: s.t0,
                burn_in: s.burn_in,
                seed: 0,
            };
            let cfg = ExperimentConfig {
                replications: s.replications,
                pipeline: s.pipeline.clone(),
                master_seed: s.seed,
            };
            let res = run_experiment(&spec, &cfg, tables.as_ref())
                .with_context(|| format!("{model} n={n} delta0={delta0}"))?;
            eprintln!(
                "{model} n={n} delta0={delta0}: {} ({:.1}s)",
                res.rates
                    .iter()
                    .map(|r| format!("{}={:.3}", r.kind, r.frequency))
                    .collect::<Vec<_>>()
                    .join(" "),
                res.wall_clock_seconds
            );
            results.push(res);
        }
    }
    write_experiment_csv(&results, output(s.output.as_deref())?)?;
    if let Some(path) = &s.json {
        std::fs::write(path, serde_json::to_string_pretty(&results)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn cmd_quantiles(flags: QuantileFlags) -> Result<()> {
    let s: QuantileSettings = flags.resolve()?;
    let kinds = if s.kinds.is_empty() {
        FunctionalKind::ALL.to_vec()
    } else {
        s.kinds.clone()
    };
    let tables = build_critical_tables(
        &kinds,
        &s.levels,
        s.replications,
        s.resolution,
        s.resolution,
        s.seed,
    )?;
    let set = CriticalTableSet::new(tables);
    let mut out = output(s.output.as_deref())?;
    out.write_all(set.to_json()?.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}
