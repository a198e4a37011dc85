use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use sqsel::io::{run, Command as RunCommand, RunConfig};
use sqsel::kernel::KernelFamily;
use sqsel::pipeline::Method;

/// Selective inference for quantile regression: randomized l1-penalized
/// smoothed quantile regression selection with pivot-based intervals.
#[derive(Parser)]
#[command(name = "sqsel", version, about)]
struct Cli {
    /// JSON config file supplying defaults; explicit flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Commands,
}

#[derive(Subcommand)]
enum Commands {
    /// Select variables and refit; write the fitted model as JSON.
    Fit(DataArgs),
    /// Full selective inference on a CSV; write report CSV + JSON.
    Infer(DataArgs),
    /// Generate a simulation-model dataset as CSV.
    Simulate(SimArgs),
    /// Run the Monte Carlo replication suite.
    Replicate(RepArgs),
}

#[derive(Args)]
struct TuningArgs {
    /// Quantile level in (0, 1).
    #[arg(long)]
    tau: Option<f64>,
    /// Two-sided miscoverage level of the intervals.
    #[arg(long)]
    alpha: Option<f64>,
    /// c in the penalty formula c sqrt(log(p)/n).
    #[arg(long = "lambda-scale")]
    lambda_scale: Option<f64>,
    /// Explicit penalty level, overriding the formula.
    #[arg(long)]
    lambda: Option<f64>,
    /// Kernel family: gaussian | logistic | uniform | epanechnikov.
    #[arg(long)]
    kernel: Option<String>,
    /// Bandwidth mode: same | appendix-e | explicit.
    #[arg(long = "bandwidth-mode")]
    bandwidth_mode: Option<String>,
    #[arg(long = "h-select")]
    h_select: Option<f64>,
    #[arg(long = "h-infer")]
    h_infer: Option<f64>,
    /// Randomization variance of each coordinate of sqrt(n) omega.
    #[arg(long)]
    delta2: Option<f64>,
    /// Coercivity ridge of the selection program (default: auto).
    #[arg(long)]
    ridge: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Column standardization of X before selection.
    #[arg(long)]
    standardize: Option<bool>,
    /// Include an unpenalized intercept.
    #[arg(long)]
    intercept: Option<bool>,
    /// Fraction of samples used for selection by the splitting baseline.
    #[arg(long = "split-fraction")]
    split_fraction: Option<f64>,
}

#[derive(Args)]
struct DataArgs {
    #[command(flatten)]
    tuning: TuningArgs,
    /// Input CSV with a header row.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Name of the response column.
    #[arg(long)]
    response: Option<String>,
    /// Columns to exclude, comma separated.
    #[arg(long = "drop-columns", value_delimiter = ',')]
    drop_columns: Option<Vec<String>>,
    /// Categorical columns to one-hot encode (first level dropped).
    #[arg(long = "one-hot", value_delimiter = ',')]
    one_hot_columns: Option<Vec<String>>,
    /// Method: proposed | naive | splitting.
    #[arg(long)]
    method: Option<String>,
    /// Output path prefix.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimArgs {
    #[command(flatten)]
    tuning: TuningArgs,
    /// Simulation model id (1-7).
    #[arg(long)]
    model: Option<u8>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    /// Signal level.
    #[arg(long)]
    c: Option<f64>,
    /// Output CSV path (extension replaced by .csv).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RepArgs {
    #[command(flatten)]
    tuning: TuningArgs,
    /// Models to include, comma separated.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<u8>>,
    /// Signal levels, comma separated.
    #[arg(long, value_delimiter = ',')]
    signals: Option<Vec<f64>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    /// Worker threads (default: SQSEL_WORKERS or 8).
    #[arg(long)]
    workers: Option<usize>,
    /// Sample-size multiplier of the projected-target oracle.
    #[arg(long = "oracle-factor")]
    oracle_factor: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_kernel(name: &str) -> Result<KernelFamily, String> {
    match name {
        "gaussian" => Ok(KernelFamily::Gaussian),
        "logistic" => Ok(KernelFamily::Logistic),
        "uniform" => Ok(KernelFamily::Uniform),
        "epanechnikov" => Ok(KernelFamily::Epanechnikov),
        other => Err(format!("unknown kernel '{other}'")),
    }
}

fn parse_method(name: &str) -> Result<Method, String> {
    match name {
        "proposed" => Ok(Method::Proposed),
        "naive" => Ok(Method::Naive),
        "splitting" => Ok(Method::Splitting),
        other => Err(format!("unknown method '{other}'")),
    }
}

fn apply_tuning(cfg: &mut RunConfig, t: &TuningArgs) -> Result<(), String> {
    if let Some(v) = t.tau {
        cfg.tau = v;
    }
    if let Some(v) = t.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = t.lambda_scale {
        cfg.lambda_scale = v;
    }
    if t.lambda.is_some() {
        cfg.explicit_lambda = t.lambda;
    }
    if let Some(k) = &t.kernel {
        cfg.kernel = parse_kernel(k)?;
    }
    if let Some(m) = &t.bandwidth_mode {
        cfg.bandwidth_mode = m.clone();
    }
    if t.h_select.is_some() {
        cfg.h_select = t.h_select;
    }
    if t.h_infer.is_some() {
        cfg.h_infer = t.h_infer;
    }
    if let Some(v) = t.delta2 {
        cfg.delta_sq = v;
    }
    if t.ridge.is_some() {
        cfg.ridge = t.ridge;
    }
    if let Some(v) = t.seed {
        cfg.seed = v;
    }
    if let Some(v) = t.standardize {
        cfg.standardize = v;
    }
    if let Some(v) = t.intercept {
        cfg.intercept = v;
    }
    if let Some(v) = t.split_fraction {
        cfg.split_fraction = v;
    }
    Ok(())
}

fn build_config(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
            serde_json::from_str::<RunConfig>(&text)
                .map_err(|e| format!("invalid config {}: {e}", path.display()))?
        }
        None => RunConfig::default(),
    };
    match &cli.command {
        Commands::Fit(a) | Commands::Infer(a) => {
            cfg.command = if matches!(cli.command, Commands::Fit(_)) {
                RunCommand::Fit
            } else {
                RunCommand::Infer
            };
            apply_tuning(&mut cfg, &a.tuning)?;
            if a.input.is_some() {
                cfg.input = a.input.clone();
            }
            if a.response.is_some() {
                cfg.response = a.response.clone();
            }
            if let Some(v) = &a.drop_columns {
                cfg.drop_columns = v.clone();
            }
            if let Some(v) = &a.one_hot_columns {
                cfg.one_hot_columns = v.clone();
            }
            if let Some(m) = &a.method {
                cfg.method = parse_method(m)?;
            }
            if let Some(o) = &a.out {
                cfg.out = o.clone();
            }
        }
        Commands::Simulate(a) => {
            cfg.command = RunCommand::Simulate;
            apply_tuning(&mut cfg, &a.tuning)?;
            if let Some(v) = a.model {
                cfg.model = v;
            }
            if let Some(v) = a.n {
                cfg.n = v;
            }
            if let Some(v) = a.p {
                cfg.p = v;
            }
            if let Some(v) = a.c {
                cfg.c = v;
            }
            if let Some(o) = &a.out {
                cfg.out = o.clone();
            }
        }
        Commands::Replicate(a) => {
            cfg.command = RunCommand::Replicate;
            apply_tuning(&mut cfg, &a.tuning)?;
            if let Some(v) = &a.models {
                cfg.models = v.clone();
            }
            if let Some(v) = &a.signals {
                cfg.signals = v.clone();
            }
            if let Some(v) = a.n {
                cfg.n = v;
            }
            if let Some(v) = a.p {
                cfg.p = v;
            }
            if let Some(v) = a.reps {
                cfg.reps = v;
            }
            if let Some(v) = a.workers {
                cfg.workers = v;
            }
            if let Some(v) = a.oracle_factor {
                cfg.oracle_factor = v;
            }
            if let Some(o) = &a.out {
                cfg.out = o.clone();
            }
        }
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match build_config(&cli) {
        Ok(cfg) => cfg,
        Err(msg) => {
            eprintln!(
                "{}",
                json!({ "error": { "kind": "usage", "message": msg } })
            );
            return ExitCode::from(2);
        }
    };
    match run(&cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!(
                "{}",
                json!({
                    "error": {
                        "kind": format!("{err:?}").split(['{', '(']).next().unwrap_or("error").trim(),
                        "message": err.to_string(),
                    }
                })
            );
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
