//! CSV ingestion, report serialization, and the command front-end.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kernel::KernelFamily;
use crate::pipeline::{run_method, InferenceConfig, InferenceReport, Method};
use crate::sim::{generate, run_replications, ModelSpec, SuiteConfig, SuiteResults};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Fit,
    Infer,
    Simulate,
    Replicate,
}

/// Full run configuration: resolved from CLI flags layered over an
/// optional JSON config file (flags win).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub command: Command,
    pub tau: f64,
    pub alpha: f64,
    pub lambda_scale: f64,
    pub explicit_lambda: Option<f64>,
    pub kernel: KernelFamily,
    /// "same" | "appendix-e" | explicit h values.
    pub bandwidth_mode: String,
    pub h_select: Option<f64>,
    pub h_infer: Option<f64>,
    pub delta_sq: f64,
    pub ridge: Option<f64>,
    pub seed: u64,
    pub standardize: bool,
    pub intercept: bool,
    pub split_fraction: f64,
    pub method: Method,
    // IO
    pub input: Option<PathBuf>,
    pub response: Option<String>,
    pub drop_columns: Vec<String>,
    pub one_hot_columns: Vec<String>,
    pub out: PathBuf,
    // Simulation
    pub model: u8,
    pub models: Vec<u8>,
    pub signals: Vec<f64>,
    pub n: usize,
    pub p: usize,
    pub c: f64,
    pub reps: usize,
    pub workers: usize,
    pub oracle_factor: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Infer,
            tau: 0.7,
            alpha: 0.1,
            lambda_scale: 0.6,
            explicit_lambda: None,
            kernel: KernelFamily::Gaussian,
            bandwidth_mode: "same".to_string(),
            h_select: None,
            h_infer: None,
            delta_sq: 1.0,
            ridge: None,
            seed: 0,
            standardize: true,
            intercept: true,
            split_fraction: 2.0 / 3.0,
            method: Method::Proposed,
            input: None,
            response: None,
            drop_columns: Vec::new(),
            one_hot_columns: Vec::new(),
            out: PathBuf::from("report"),
            model: 1,
            models: vec![1, 2, 3],
            signals: vec![0.1, 0.5, 1.0],
            n: 400,
            p: 50,
            c: 1.0,
            reps: 200,
            workers: default_workers(),
            oracle_factor: 100,
        }
    }
}

pub fn default_workers() -> usize {
    std::env::var("SQSEL_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(8)
}

impl RunConfig {
    pub fn inference_config(&self) -> Result<InferenceConfig> {
        let bandwidth_mode = match self.bandwidth_mode.as_str() {
            "same" => crate::pipeline::BandwidthMode::SameAsSelection,
            "appendix-e" => crate::pipeline::BandwidthMode::AppendixE,
            "explicit" => {
                let (Some(hs), Some(hi)) = (self.h_select, self.h_infer) else {
                    return Err(Error::InvalidConfig(
                        "explicit bandwidth mode needs --h-select and --h-infer".into(),
                    ));
                };
                crate::pipeline::BandwidthMode::Explicit {
                    h_select: hs,
                    h_infer: hi,
                }
            }
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown bandwidth mode '{other}' (same | appendix-e | explicit)"
                )))
            }
        };
        Ok(InferenceConfig {
            tau: self.tau,
            alpha: self.alpha,
            lambda_scale: self.lambda_scale,
            explicit_lambda: self.explicit_lambda,
            kernel: self.kernel,
            bandwidth_mode,
            delta_sq: self.delta_sq,
            ridge: self.ridge,
            seed: self.seed,
            standardize: self.standardize,
            intercept: self.intercept,
            split_fraction: self.split_fraction,
            monotonicity_grid: None,
        })
    }
}

/// Missing-value markers dropped with the row.
fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim(),
        "" | "NA" | "na" | "N/A" | "NaN" | "nan" | "null" | "NULL" | "."
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_dropped_missing: usize,
    pub warnings: Vec<String>,
}

/// Read a CSV with a header row into a numeric design matrix plus the
/// response. Categorical columns are expanded into first-level-dropped
/// indicators; rows with missing values are dropped and counted.
pub fn load_csv(
    path: &Path,
    response_column: &str,
    drop_columns: &[String],
    one_hot_columns: &[String],
) -> Result<(Dataset, LoadReport)> {
    if !path.exists() {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::NotFound,
            format!("input file not found: {}", path.display()),
        )));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.to_string()).collect();
    let resp_idx = headers
        .iter()
        .position(|h| h == response_column)
        .ok_or_else(|| {
            Error::InvalidConfig(format!(
                "response column '{response_column}' not found; available: {}",
                headers.join(", ")
            ))
        })?;
    let dropped: BTreeSet<&str> = drop_columns.iter().map(|s| s.as_str()).collect();
    let one_hot: BTreeSet<&str> = one_hot_columns.iter().map(|s| s.as_str()).collect();
    for name in one_hot_columns.iter().chain(drop_columns.iter()) {
        if !headers.iter().any(|h| h == name) {
            return Err(Error::InvalidConfig(format!("column '{name}' not found")));
        }
    }

    let records: Vec<csv::StringRecord> = reader.records().collect::<std::result::Result<_, _>>()?;
    let rows_read = records.len();

    // Keep rows with no missing cells among used columns.
    let used: Vec<usize> = (0..headers.len())
        .filter(|&i| i == resp_idx || !dropped.contains(headers[i].as_str()))
        .collect();
    let keep: Vec<usize> = (0..records.len())
        .filter(|&r| used.iter().all(|&c| !is_missing(&records[r][c])))
        .collect();
    let rows_dropped_missing = rows_read - keep.len();

    // Column layout: numeric columns as-is, one-hot expanded.
    struct ColPlan {
        source: usize,
        name: String,
        level: Option<String>,
    }
    let mut plan: Vec<ColPlan> = Vec::new();
    for (i, h) in headers.iter().enumerate() {
        if i == resp_idx || dropped.contains(h.as_str()) {
            continue;
        }
        if one_hot.contains(h.as_str()) {
            let mut levels: BTreeSet<String> = BTreeSet::new();
            for &r in &keep {
                levels.insert(records[r][i].trim().to_string());
            }
            // First (lexicographically smallest) level is the baseline.
            for level in levels.iter().skip(1) {
                plan.push(ColPlan {
                    source: i,
                    name: format!("{h}={level}"),
                    level: Some(level.clone()),
                });
            }
        } else {
            plan.push(ColPlan {
                source: i,
                name: h.clone(),
                level: None,
            });
        }
    }

    let n = keep.len();
    if n == 0 {
        return Err(Error::InvalidConfig("no complete rows after filtering".into()));
    }
    let mut x = DMatrix::zeros(n, plan.len());
    let mut y = DVector::zeros(n);
    for (out_r, &r) in keep.iter().enumerate() {
        let cell = records[r][resp_idx].trim();
        y[out_r] = cell.parse::<f64>().map_err(|_| Error::CsvParse {
            row: r + 2,
            column: response_column.to_string(),
            detail: format!("not a number: '{cell}'"),
        })?;
        for (out_c, col) in plan.iter().enumerate() {
            let cell = records[r][col.source].trim();
            x[(out_r, out_c)] = match &col.level {
                Some(level) => {
                    if cell == level {
                        1.0
                    } else {
                        0.0
                    }
                }
                None => cell.parse::<f64>().map_err(|_| Error::CsvParse {
                    row: r + 2,
                    column: headers[col.source].clone(),
                    detail: format!("not a number: '{cell}'"),
                })?,
            };
        }
    }

    let names: Vec<String> = plan.iter().map(|c| c.name.clone()).collect();
    let mut warnings = Vec::new();
    for (j, name) in names.iter().enumerate() {
        let col = x.column(j);
        let first = col[0];
        if col.iter().all(|&v| v == first) {
            warnings.push(format!("constant column: {name}"));
        }
    }
    let data = Dataset::new(x, y, names)?;
    Ok((
        data,
        LoadReport {
            rows_read,
            rows_dropped_missing,
            warnings,
        },
    ))
}

/// 17 significant digits; reports are reproducible inputs for downstream
/// tooling.
fn fmt_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else if v.is_nan() {
        "nan".to_string()
    } else if v > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

pub fn write_report_csv(report: &InferenceReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "method", "variable", "index", "estimate", "std_error", "lcb", "ucb", "pvalue", "flags",
    ])?;
    for row in &report.rows {
        w.write_record([
            report.method.name().to_string(),
            row.name.clone(),
            row.index.to_string(),
            fmt_float(row.estimate),
            fmt_float(row.std_error),
            fmt_float(row.lcb),
            fmt_float(row.ucb),
            fmt_float(row.pvalue),
            row.flags.join(";"),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut f = fs::File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

pub fn write_dataset_csv(data: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["y".to_string()];
    header.extend(data.names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..data.n() {
        let mut rec = vec![fmt_float(data.y[i])];
        for j in 0..data.p() {
            rec.push(fmt_float(data.x[(i, j)]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_suite_csv(results: &SuiteResults, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "model", "c", "method", "rep", "variable", "estimate", "lcb", "ucb", "pvalue", "target",
        "covered",
    ])?;
    for r in &results.rows {
        w.write_record([
            r.model.to_string(),
            fmt_float(r.c),
            r.method.name().to_string(),
            r.rep.to_string(),
            r.variable.to_string(),
            fmt_float(r.estimate),
            fmt_float(r.lcb),
            fmt_float(r.ucb),
            fmt_float(r.pvalue),
            fmt_float(r.target),
            r.covered.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FitArtifact<'a> {
    selected: &'a [usize],
    variables: Vec<String>,
    estimates: Vec<f64>,
    intercept: Option<f64>,
    kkt_residual: f64,
    config: &'a crate::pipeline::ConfigEcho,
    flags: &'a [String],
}

#[derive(Serialize)]
struct SuiteArtifact<'a> {
    config: &'a SuiteConfig,
    cells: &'a [crate::sim::CellSummary],
    failures: &'a [String],
    version: &'static str,
}

/// Execute a command; artifacts land on disk under `config.out`.
pub fn run(config: &RunConfig) -> Result<()> {
    match config.command {
        Command::Simulate => {
            let spec = ModelSpec::new(config.model, config.n, config.p, config.c, config.tau)?;
            let data = generate(&spec, config.seed);
            let path = with_extension(&config.out, "csv");
            write_dataset_csv(&data, &path)?;
            Ok(())
        }
        Command::Fit | Command::Infer => {
            let input = config
                .input
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("--input is required".into()))?;
            let response = config
                .response
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("--response is required".into()))?;
            let (data, load) = load_csv(
                input,
                response,
                &config.drop_columns,
                &config.one_hot_columns,
            )?;
            for wmsg in &load.warnings {
                eprintln!("warning: {wmsg}");
            }
            if load.rows_dropped_missing > 0 {
                eprintln!(
                    "note: dropped {} of {} rows with missing values",
                    load.rows_dropped_missing, load.rows_read
                );
            }
            let cfg = config.inference_config()?;
            let report = run_method(&data, &cfg, config.method)?;
            if config.command == Command::Infer {
                write_report_csv(&report, &with_extension(&config.out, "csv"))?;
                write_json(&report, &with_extension(&config.out, "json"))?;
            } else {
                let artifact = FitArtifact {
                    selected: &report.selected,
                    variables: report.rows.iter().map(|r| r.name.clone()).collect(),
                    estimates: report.rows.iter().map(|r| r.estimate).collect(),
                    intercept: report.intercept_estimate,
                    kkt_residual: report.diagnostics.kkt_residual,
                    config: &report.config,
                    flags: &report.flags,
                };
                write_json(&artifact, &with_extension(&config.out, "json"))?;
            }
            Ok(())
        }
        Command::Replicate => {
            let suite = SuiteConfig {
                models: config.models.clone(),
                signals: config.signals.clone(),
                n: config.n,
                p: config.p,
                tau: config.tau,
                reps: config.reps,
                master_seed: config.seed,
                workers: config.workers,
                methods: vec![Method::Proposed, Method::Naive, Method::Splitting],
                inference: config.inference_config()?,
                oracle_factor: config.oracle_factor,
            };
            let results = run_replications(&suite)?;
            fs::create_dir_all(&config.out)?;
            write_suite_csv(&results, &config.out.join("replications.csv"))?;
            let artifact = SuiteArtifact {
                config: &suite,
                cells: &results.cells,
                failures: &results.failures,
                version: env!("CARGO_PKG_VERSION"),
            };
            write_json(&artifact, &config.out.join("summary.json"))?;
            Ok(())
        }
    }
}

fn with_extension(base: &Path, ext: &str) -> PathBuf {
    let mut p = base.to_path_buf();
    p.set_extension(ext);
    p
}
