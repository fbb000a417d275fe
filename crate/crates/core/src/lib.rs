//! Calibrated uncertainty for molecular property regression with deep ensembles.
//!
//! The crate is organised bottom-up:
//!
//! * [`chemgraph`] parses structures, computes atomisation-energy targets, builds
//!   cutoff graphs and produces reproducible dataset splits.
//! * [`diffnet`] holds a small tensor-level reverse-mode differentiation tape and the
//!   two-headed probabilistic regressors built on it (a message passing network for
//!   molecular graphs and a dense network for feature vectors).
//! * [`training`] trains a single ensemble member with the MSE to NLL interpolated
//!   objective and NLL-based early stopping.
//! * [`ensemble`] combines members into the uniformly weighted Gaussian mixture and
//!   splits its variance into aleatoric and epistemic parts.
//! * [`calibrate`] fits isotonic variance recalibration and Huber affine corrections.
//! * [`evalmetrics`] computes MAE, RMSE, NLL, ENCE, CV and quantile calibration curves.
//! * [`sweep`] runs ensemble-size and learning-curve experiments.

pub mod calibrate;
pub mod chemgraph;
pub mod config;
pub mod diffnet;
pub mod ensemble;
pub mod evalmetrics;
pub mod seed;
pub mod sweep;
pub mod training;

mod error;

pub use error::{Error, ErrorClass};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// On-disk artifact schema version shared by every versioned file this crate writes.
pub const SCHEMA_VERSION: u32 = 1;
