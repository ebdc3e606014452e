//! `confset`: train, calibrate, predict, evaluate and simulate conformal
//! prediction sets from the command line.
//!
//! Exit codes: 0 on success, 2 on input or validation errors, 3 on numerical
//! or runtime failures.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod predictions;

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn input(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self { code: 3, message: message.into() }
    }
}

impl From<conformal_core::Error> for CliError {
    fn from(e: conformal_core::Error) -> Self {
        if e.is_numerical() {
            Self::runtime(e.to_string())
        } else {
            Self::input(e.to_string())
        }
    }
}

#[derive(Parser)]
#[command(name = "confset", version, about = "Calibrated prediction sets for multi-class probability forecasts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Clone)]
pub struct Common {
    /// Flat `key=value` config file; keys are long flag names. Flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the cost-weighted softmax model; writes model.txt and train_report.txt.
    Train(TrainArgs),
    /// Fit a nested or localized calibration; writes calibration.txt.
    Calibrate(CalibrateArgs),
    /// Build one prediction set per case; writes predictions.csv.
    Predict(PredictArgs),
    /// Score predictions against outcomes; writes evaluation.txt and CSV tables.
    Evaluate(EvaluateArgs),
    /// Monte Carlo coverage study on synthetic data; writes simulation.txt.
    Simulate(SimulateArgs),
    /// Draw a synthetic dataset with known class probabilities.
    Generate(GenerateArgs),
    /// Write the model's class probabilities for a dataset; writes probs.csv.
    Probs(ProbsArgs),
    /// Train once per weight vector and compare confusion tables; writes sweep.txt.
    Sweep(SweepArgs),
}

#[derive(Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    /// Training CSV with header `id,y,x_1,...,x_d`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Per-class misclassification costs `w0,w1,...`; their count fixes K.
    #[arg(long)]
    pub weights: Option<String>,
    /// Number of classes when no weights are given (default: observed).
    #[arg(long)]
    pub classes: Option<usize>,
    /// Gradient-descent iteration cap.
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Stop when the largest gradient entry falls below this value.
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Target miscoverage level in (0, 1).
    #[arg(long)]
    pub alpha: Option<f64>,
    /// `nested` or `localized`.
    #[arg(long)]
    pub method: Option<String>,
    /// Probability CSV `id,p_0,...,p_{K-1}` for the calibration cases.
    #[arg(long)]
    pub probs: Option<PathBuf>,
    /// Model file; probabilities are computed from the features in `--data`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Calibration cases (`id,y,...`); supplies the outcomes.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub common: Common,
    /// Calibration file from `confset calibrate`.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// `nested`/`localized` (taken from the calibration file), `naive` or `oracle`.
    #[arg(long)]
    pub method: Option<String>,
    /// Miscoverage level for `--method oracle`.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Conformity-score threshold for `--method naive`.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Probability CSV for the cases to predict.
    #[arg(long)]
    pub probs: Option<PathBuf>,
    /// Model file; probabilities are computed from the features in `--data`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Cases to predict when using `--model`.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Prediction CSV from `confset predict`.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Outcome CSV `id,y,...` with the same ids.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Number of classes (default: inferred from labels).
    #[arg(long)]
    pub classes: Option<usize>,
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Comma-separated miscoverage levels.
    #[arg(long)]
    pub alpha: Option<String>,
    #[arg(long)]
    pub replications: Option<usize>,
    /// Master seed; replication seeds are derived from it.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_cal: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    /// Training cost weights `w0,w1,...`.
    #[arg(long)]
    pub weights: Option<String>,
    /// `trained` (fit the softmax model) or `true` (use the generator's probabilities).
    #[arg(long)]
    pub source: Option<String>,
    /// Generator: `default` (K=3, d=4) or `single-feature`.
    #[arg(long)]
    pub spec: Option<String>,
}

#[derive(Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub common: Common,
    /// Number of cases.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Generator: `default` or `single-feature`.
    #[arg(long)]
    pub spec: Option<String>,
    /// Train/calibration/test fractions, e.g. `0.5,0.25,0.25`; writes train.csv, cal.csv, test.csv.
    #[arg(long)]
    pub split: Option<String>,
}

#[derive(Args)]
pub struct ProbsArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: Common,
    /// Training CSV.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Evaluation CSV (default: the training data).
    #[arg(long)]
    pub eval: Option<PathBuf>,
    /// Weight vectors separated by `;`, e.g. `1,1,1;1,2,5`.
    #[arg(long)]
    pub ladder: Option<String>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(a),
        Command::Calibrate(a) => commands::calibrate(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Generate(a) => commands::generate(a),
        Command::Probs(a) => commands::probs(a),
        Command::Sweep(a) => commands::sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("confset: error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
