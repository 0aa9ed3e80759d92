use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use polvote::Error;

mod commands;
mod manifest;

#[derive(Debug, Parser)]
#[command(name = "polvote", version, about = "Predict party choice from political likes")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Study configuration (TOML); built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice of the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Comma-separated penalty grid, e.g. `0,0.5,1`.
    #[arg(long)]
    pub lambda_grid: Option<String>,
    #[arg(long)]
    pub folds: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset, social graph and polls.
    Synth {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        alignment: Option<f64>,
        #[arg(long)]
        survey_signal: Option<f64>,
        #[arg(long)]
        age_skew: Option<f64>,
    },
    /// Build feature matrices from a dataset.
    Features {
        #[arg(long)]
        input: PathBuf,
        /// One model kind, or all five when omitted.
        #[arg(long)]
        model: Option<String>,
    },
    /// Cross-validate the penalty and fit a feature matrix.
    Fit {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
    },
    /// Score a predictions file.
    Eval {
        #[arg(long)]
        input: PathBuf,
    },
    /// Sweep the most-liked-party rule over Min Likes and Party Like Cap.
    Grid {
        #[arg(long)]
        input: PathBuf,
        /// Comma-separated Min Likes values.
        #[arg(long)]
        min_likes: Option<String>,
        /// Comma-separated Party Like Cap values.
        #[arg(long)]
        plc: Option<String>,
    },
    /// Tag and comment-like propagation over a social graph.
    Propagate {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        social: PathBuf,
    },
    /// Permutation tests of filtered subsamples against the full survey.
    Nonresponse {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        n_perm: Option<usize>,
    },
    /// Forecast vote shares from like counts, weighted against two polls.
    Forecast {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        polls: PathBuf,
        /// Actual result, same layout as the polls file.
        #[arg(long)]
        actual: Option<PathBuf>,
        /// Election day (YYYY-MM-DD); defaults to the last day of the window.
        #[arg(long)]
        election_date: Option<String>,
        /// Trailing window, in days, of the counts matched to each poll.
        #[arg(long, default_value_t = 7)]
        poll_days: i64,
        /// Trailing window, in days, of the counts used for the forecast.
        #[arg(long, default_value_t = 7)]
        election_days: i64,
    },
    /// Compare all five model specifications on one dataset.
    Replicate {
        /// Dataset to use; generated from the configuration when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        alignment: Option<f64>,
        #[arg(long)]
        survey_signal: Option<f64>,
        #[command(flatten)]
        fit: FitArgs,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::Features { .. } => "features",
            Command::Fit { .. } => "fit",
            Command::Eval { .. } => "eval",
            Command::Grid { .. } => "grid",
            Command::Propagate { .. } => "propagate",
            Command::Nonresponse { .. } => "nonresponse",
            Command::Forecast { .. } => "forecast",
            Command::Replicate { .. } => "replicate",
        }
    }
}

fn report(err: &Error) -> ExitCode {
    let body = serde_json::json!({ "error": err.kind(), "message": err.to_string() });
    eprintln!("{body}");
    if err.is_validation() {
        ExitCode::from(1)
    } else {
        ExitCode::from(2)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let body = serde_json::json!({ "error": "usage", "message": e.to_string() });
            eprintln!("{body}");
            return ExitCode::from(1);
        }
    };
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return report(&Error::InvalidConfig(e.to_string()));
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}
