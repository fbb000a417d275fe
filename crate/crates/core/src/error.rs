use thiserror::Error;

use crate::calibrate::CalibrationError;
use crate::chemgraph::ChemError;
use crate::config::ConfigError;
use crate::diffnet::DiffError;
use crate::ensemble::EnsembleError;
use crate::evalmetrics::MetricError;
use crate::training::TrainError;

/// Crate-wide error.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Chem(#[from] ChemError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Metric(#[from] MetricError),
}

/// Coarse failure class, used by the command line for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numeric,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::Chem(e) => e.class(),
            Error::Diff(e) => e.class(),
            Error::Train(e) => e.class(),
            Error::Ensemble(_) | Error::Calibration(_) | Error::Metric(_) => ErrorClass::Data,
        }
    }
}
