//! `uqmol` command line: ingest structures, train a deep ensemble, predict, recalibrate
//! variances, evaluate calibration and run ensemble-size and learning-curve sweeps.
//!
//! Every command reads the same flat configuration (a `key = value` file plus
//! `--set key=value` overrides) and works inside one output directory.

pub mod artifacts;
pub mod commands;
pub mod settings;

use std::ffi::OsString;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use uqmol::config::KeyValues;
use uqmol::ErrorClass;

use crate::artifacts::{DataError, OutDir, UsageError};
use crate::commands::evaluate::Variant;
use crate::commands::sweep::SweepMode;
use crate::commands::Context;
use crate::settings::PipelineConfig;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "uqmol", version, about = "Calibrated uncertainty for molecular energy ensembles")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Configuration file with `key = value` lines.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Override one setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Output directory shared by all commands.
    #[arg(long, env = "UQMOL_OUT", default_value = "uqmol-out", global = true)]
    pub out: PathBuf,
    /// Single worker thread everywhere.
    #[arg(long, global = true)]
    pub strict_deterministic: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepKind {
    EnsembleSize,
    LearningCurve,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse structures, compute targets, write the dataset cache and split.
    Ingest,
    /// Train `ensemble.m` members and write checkpoints, logs and a manifest.
    Train,
    /// Write mixture and member predictions for one split.
    Predict {
        #[arg(long, value_enum, default_value = "test")]
        split: Split,
    },
    /// Fit the variance recalibration map on validation predictions.
    Recalibrate {
        /// Defaults to `<out>/predictions_val.csv`.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Fit a single scale factor instead of the isotonic map.
        #[arg(long)]
        scalar: bool,
        /// CSV with header `id,x,y` of paired energies for a Huber affine correction.
        #[arg(long, value_name = "PAIRS")]
        affine: Option<PathBuf>,
    },
    /// Compute the calibration report, reliability bins and quantile curve.
    Evaluate {
        /// Defaults to `<out>/predictions_test.csv`.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Apply the fitted calibration artifacts first.
        #[arg(long, conflicts_with = "both")]
        calibrated: bool,
        /// Write both the uncalibrated and the calibrated report.
        #[arg(long)]
        both: bool,
    },
    /// Metric-versus-ensemble-size or metric-versus-training-fraction table.
    Sweep {
        #[arg(long, value_enum)]
        mode: SweepKind,
        /// Largest ensemble for the ensemble-size sweep; defaults to the pool size.
        #[arg(long)]
        max_size: Option<usize>,
        /// Training fractions for the learning curve.
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.5,1.0")]
        fractions: Vec<f64>,
        /// Evaluation split; `val` for ensemble size, `test` for learning curves by default.
        #[arg(long, value_enum)]
        split: Option<Split>,
    },
}

/// Merges the config file and the overrides into validated settings.
pub fn load_settings(global: &GlobalArgs) -> Result<PipelineConfig> {
    let mut kv = match &global.config {
        Some(path) => KeyValues::load(path)?,
        None => KeyValues::new(),
    };
    for assignment in &global.set {
        kv.set_assignment(assignment)
            .map_err(|_| UsageError(format!("--set expects KEY=VALUE, got {assignment:?}")))?;
    }
    Ok(PipelineConfig::from_kv(&kv)?)
}

pub fn run(cli: Cli) -> Result<()> {
    let config = load_settings(&cli.global)?;
    let ctx = Context::new(config, OutDir::new(&cli.global.out), cli.global.strict_deterministic);
    match cli.command {
        Command::Ingest => commands::ingest::run(&ctx),
        Command::Train => commands::train::run(&ctx),
        Command::Predict { split } => commands::predict::run(&ctx, split.name()),
        Command::Recalibrate {
            predictions,
            scalar,
            affine,
        } => commands::recalibrate::run(&ctx, predictions.as_deref(), scalar, affine.as_deref()),
        Command::Evaluate {
            predictions,
            calibrated,
            both,
        } => {
            let variant = match (calibrated, both) {
                (_, true) => Variant::Both,
                (true, false) => Variant::Calibrated,
                (false, false) => Variant::Uncalibrated,
            };
            commands::evaluate::run(&ctx, predictions.as_deref(), variant)
        }
        Command::Sweep {
            mode,
            max_size,
            fractions,
            split,
        } => {
            let mode = match mode {
                SweepKind::EnsembleSize => SweepMode::EnsembleSize { max_size },
                SweepKind::LearningCurve => SweepMode::LearningCurve { fractions },
            };
            commands::sweep::run(&ctx, &mode, split.map(Split::name))
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    run(Cli::try_parse_from(args).map_err(|e| UsageError(e.to_string()))?)
}

fn class_of(err: &anyhow::Error) -> Option<ErrorClass> {
    use uqmol::calibrate::CalibrationError;
    use uqmol::chemgraph::ChemError;
    use uqmol::config::ConfigError;
    use uqmol::diffnet::DiffError;
    use uqmol::ensemble::EnsembleError;
    use uqmol::evalmetrics::MetricError;
    use uqmol::training::TrainError;

    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<uqmol::Error>() {
            return Some(e.class());
        }
        if let Some(e) = cause.downcast_ref::<ChemError>() {
            return Some(e.class());
        }
        if let Some(e) = cause.downcast_ref::<DiffError>() {
            return Some(e.class());
        }
        if let Some(e) = cause.downcast_ref::<TrainError>() {
            return Some(e.class());
        }
        if cause.is::<ConfigError>() || cause.is::<UsageError>() {
            return Some(ErrorClass::Config);
        }
        if cause.is::<EnsembleError>()
            || cause.is::<CalibrationError>()
            || cause.is::<MetricError>()
            || cause.is::<DataError>()
            || cause.is::<csv::Error>()
            || cause.is::<serde_json::Error>()
            || cause.is::<std::io::Error>()
        {
            return Some(ErrorClass::Data);
        }
    }
    None
}

/// The error and its causes joined by `: `, skipping causes whose text the message
/// already contains.
pub fn describe(err: &anyhow::Error) -> String {
    let mut msg = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !msg.contains(&text) {
            if !msg.is_empty() {
                msg.push_str(": ");
            }
            msg.push_str(&text);
        }
    }
    msg
}

/// Process exit code for a failed command.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    match class_of(err) {
        Some(ErrorClass::Config) => EXIT_CONFIG,
        Some(ErrorClass::Data) => EXIT_DATA,
        Some(ErrorClass::Numeric) => EXIT_NUMERIC,
        None => 1,
    }
}
