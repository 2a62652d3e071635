//! Data ingestion, analysis configuration, JSON reports and trace export.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::limit::{bundled_tables, CriticalTableSet, FunctionalKind};
use crate::pipeline::{evaluate, PipelineOptions, StatisticOutcome, TestMode};
use crate::regression::Sample;
use crate::scalar::Scalar;
use crate::statistics::StatisticKind;

/// Smallest sample accepted for analysis.
pub const MIN_OBSERVATIONS: usize = 10;

pub const REPORT_SCHEMA: &str = "mcusum.test-report";
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Which columns form the regression.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMapping {
    pub response: String,
    /// Explicit covariate columns.
    pub covariates: Option<Vec<String>>,
    /// Autoregression order: `X_t = (Y_{t-1}, …, Y_{t-p})`.
    pub lag_order: Option<usize>,
    /// Column used to label observations (e.g. a year).
    pub time_column: Option<String>,
}

impl ColumnMapping {
    pub fn validate(&self) -> Result<()> {
        if self.response.is_empty() {
            return Err(Error::InvalidInput("no response column given".into()));
        }
        match (&self.covariates, self.lag_order) {
            (Some(_), Some(_)) => Err(Error::InvalidInput(
                "give covariate columns or a lag order, not both".into(),
            )),
            (None, None) => Err(Error::InvalidInput(
                "give covariate columns or a lag order".into(),
            )),
            (Some(c), None) if c.is_empty() => {
                Err(Error::InvalidInput("covariate list is empty".into()))
            }
            (None, Some(0)) => Err(Error::InvalidInput("lag order must be at least 1".into())),
            _ => Ok(()),
        }
    }
}

/// Everything needed to rerun an analysis.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub input: PathBuf,
    #[serde(flatten)]
    pub columns: ColumnMapping,
    #[serde(flatten)]
    pub pipeline: PipelineOptions,
    /// Report destination; standard output when absent.
    pub output: Option<PathBuf>,
    /// Trace CSV destination.
    pub trace: Option<PathBuf>,
    /// Critical-table file; the bundled tables when absent.
    pub tables: Option<PathBuf>,
}

struct Table {
    header: Vec<String>,
    rows: Vec<csv::StringRecord>,
    lines: Vec<usize>,
}

fn read_table<R: Read>(reader: R) -> Result<Table> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        lines.push(
            rec.position()
                .map(|p| p.line() as usize)
                .unwrap_or(rows.len() + 2),
        );
        rows.push(rec);
    }
    Ok(Table {
        header,
        rows,
        lines,
    })
}

impl Table {
    fn column_index(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| {
            Error::InvalidInput(format!(
                "column `{name}` not found (have: {})",
                self.header.join(", ")
            ))
        })
    }

    fn numeric(&self, name: &str) -> Result<Vec<f64>> {
        let j = self.column_index(name)?;
        self.rows
            .iter()
            .zip(&self.lines)
            .map(|(rec, &line)| {
                let err = |message: String| Error::Parse {
                    line,
                    column: j + 1,
                    name: name.to_string(),
                    message,
                };
                let cell = rec.get(j).unwrap_or("");
                if cell.is_empty() {
                    return Err(err("missing value".into()));
                }
                let v: f64 = cell
                    .parse()
                    .map_err(|_| err(format!("`{cell}` is not a number")))?;
                if !v.is_finite() {
                    return Err(err(format!("`{cell}` is not finite")));
                }
                Ok(v)
            })
            .collect()
    }

    fn text(&self, name: &str) -> Result<Vec<String>> {
        let j = self.column_index(name)?;
        Ok(self
            .rows
            .iter()
            .map(|r| r.get(j).unwrap_or("").to_string())
            .collect())
    }
}

/// Reads a delimited file with a header row into a sample. Any non-empty
/// sample is accepted here; [`analyze`] enforces [`MIN_OBSERVATIONS`].
pub fn ingest<T: Scalar>(path: &Path, mapping: &ColumnMapping) -> Result<Sample<T>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::InvalidInput(format!("cannot open {}: {e}", path.display())))?;
    ingest_reader(file, mapping)
}

pub fn ingest_reader<T: Scalar, R: Read>(reader: R, mapping: &ColumnMapping) -> Result<Sample<T>> {
    mapping.validate()?;
    let table = read_table(reader)?;
    let y = table.numeric(&mapping.response)?;
    let labels = mapping
        .time_column
        .as_deref()
        .map(|c| table.text(c))
        .transpose()?;
    let (sample, skip) = match (&mapping.covariates, mapping.lag_order) {
        (Some(cols), None) => {
            let columns: Vec<Vec<f64>> = cols
                .iter()
                .map(|c| table.numeric(c))
                .collect::<Result<_>>()?;
            let n = y.len();
            let mut x = Vec::with_capacity(n * cols.len());
            for i in 0..n {
                x.extend(columns.iter().map(|c| T::lit(c[i])));
            }
            check_size(n, 1)?;
            (
                Sample::new(x, cols.len(), y.iter().map(|&v| T::lit(v)).collect())?,
                0,
            )
        }
        (None, Some(p)) => {
            check_size(y.len().saturating_sub(p), 1)?;
            let series: Vec<T> = y.iter().map(|&v| T::lit(v)).collect();
            (Sample::lag_embed(&series, p)?, p)
        }
        _ => unreachable!("mapping validated"),
    };
    match labels {
        Some(l) => sample.with_labels(l[skip..].to_vec()),
        None => Ok(sample),
    }
}

fn check_size(n: usize, required: usize) -> Result<()> {
    if n < required {
        return Err(Error::TooFewObservations { found: n, required });
    }
    Ok(())
}

/// Writes a sample as CSV (`x1..xd, y`, optional `label`) with
/// round-trip float formatting.
pub fn write_sample<T: Scalar, W: Write>(sample: &Sample<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> = (1..=sample.d()).map(|j| format!("x{j}")).collect();
    header.push("y".into());
    if sample.labels().is_some() {
        header.push("label".into());
    }
    w.write_record(&header)?;
    for i in 0..sample.n() {
        let mut row: Vec<String> = sample
            .row(i)
            .iter()
            .map(|v| format_float(v.as_f64()))
            .collect();
        row.push(format_float(sample.y()[i].as_f64()));
        if let Some(l) = sample.labels() {
            row.push(l[i].clone());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChangePointReport {
    pub s_hat: f64,
    /// 1-based observation index `⌊n ŝ⌋`.
    pub index: usize,
    /// Label of that observation when a time column was given.
    pub label: Option<String>,
    pub value: f64,
    pub degenerate: bool,
}

/// Provenance of the critical values used in asymptotic mode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableProvenance {
    pub replications: usize,
    pub g_s: usize,
    pub g_t: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub schema: String,
    pub schema_version: u32,
    pub tool_version: String,
    pub config: AnalysisConfig,
    pub n: usize,
    pub d: usize,
    pub bandwidth: f64,
    pub c_hat: f64,
    pub degenerate_points: usize,
    pub statistics: Vec<StatisticOutcome>,
    pub changepoint: ChangePointReport,
    pub critical_tables: Option<TableProvenance>,
    /// `sup_z |T̂_n(i/n, z)|`, `i = 1..=n`.
    pub trace: Vec<f64>,
}

impl TestReport {
    /// Rejection by the first requested statistic.
    pub fn primary_reject(&self) -> bool {
        self.statistics.first().is_some_and(|s| s.reject)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.schema != REPORT_SCHEMA || r.schema_version != REPORT_SCHEMA_VERSION {
            return Err(Error::InvalidInput(format!(
                "unsupported report schema `{}` version {}",
                r.schema, r.schema_version
            )));
        }
        Ok(r)
    }
}

/// Reads the configured input and runs the pipeline on it.
pub fn analyze(config: &AnalysisConfig) -> Result<TestReport> {
    let sample: Sample<f64> = ingest(&config.input, &config.columns)?;
    let loaded;
    let tables = match &config.tables {
        Some(p) => {
            loaded = CriticalTableSet::read(p)?;
            &loaded
        }
        None => bundled_tables(),
    };
    analyze_sample(&sample, config, tables)
}

/// As [`analyze`] on an already loaded sample.
pub fn analyze_sample<T: Scalar>(
    sample: &Sample<T>,
    config: &AnalysisConfig,
    tables: &CriticalTableSet,
) -> Result<TestReport> {
    check_size(sample.n(), MIN_OBSERVATIONS)?;
    let out = evaluate(sample, &config.pipeline, Some(tables))?;
    let label = sample
        .labels()
        .map(|l| l[out.changepoint.index - 1].clone());
    let critical_tables = (config.pipeline.mode == TestMode::Asymptotic).then(|| {
        let t = tables.get(FunctionalKind::SupSt).or(tables.tables.first());
        t.map(|t| TableProvenance {
            replications: t.replications,
            g_s: t.g_s,
            g_t: t.g_t,
            seed: t.seed,
        })
    });
    Ok(TestReport {
        schema: REPORT_SCHEMA.into(),
        schema_version: REPORT_SCHEMA_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        n: out.n,
        d: out.d,
        bandwidth: out.bandwidth,
        c_hat: out.c_hat,
        degenerate_points: out.degenerate_points,
        statistics: out.statistics,
        changepoint: ChangePointReport {
            s_hat: out.changepoint.s_hat,
            index: out.changepoint.index,
            label,
            value: out.changepoint.value,
            degenerate: out.changepoint.degenerate,
        },
        critical_tables: critical_tables.flatten(),
        trace: out.trace,
    })
}

/// Writes the per-row supremum trace: `i, s, sup_z, threshold,
/// is_changepoint`. The threshold is the `T_n1` critical value on the raw
/// scale, left empty when `T_n1` was not computed.
pub fn emit_trace<W: Write>(report: &TestReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "s", "sup_z", "threshold", "is_changepoint"])?;
    let threshold = report
        .statistics
        .iter()
        .find(|s| s.kind == StatisticKind::Tn1)
        .map(|s| format_float(s.critical_value_raw))
        .unwrap_or_default();
    let n = report.trace.len();
    for (k, v) in report.trace.iter().enumerate() {
        let i = k + 1;
        w.write_record([
            i.to_string(),
            format_float(i as f64 / n as f64),
            format_float(*v),
            threshold.clone(),
            u8::from(i == report.changepoint.index).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
