//! Differentiable core and the two-headed probabilistic regressors.
//!
//! A [`ProbModel`] records its forward pass for a batch on a [`tape::Tape`] and
//! returns two columns per instance: the mean and the pre-activation of the
//! variance head. The variance is `softplus(z) + min_variance`, so it is strictly
//! positive for any parameters. Targets are standardised with a [`TargetScaler`]
//! for training; predictions are always reported in target units.

mod checkpoint;
mod dense;
mod mpnn;
mod params;
pub mod tape;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ErrorClass;
use tape::{Tape, Var};

pub use checkpoint::{Checkpoint, TrainingCounters, CHECKPOINT_FORMAT};
pub use dense::{DenseConfig, DenseNet, Features};
pub use mpnn::{expand_rbf, GraphBatch, Mpnn, NetConfig};
pub use params::{Layout, ParamVector, TensorSpec};

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite values in layer `{layer}`")]
    NonFinite { layer: String },
    #[error("element Z={0} is not in the model's element set")]
    UnsupportedElement(u8),
    #[error("input has {got} features, model expects {expected}")]
    InputShape { expected: usize, got: usize },
    #[error("checkpoint mismatch in field `{field}`: {message}")]
    Mismatch { field: String, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl DiffError {
    pub fn class(&self) -> ErrorClass {
        match self {
            DiffError::InvalidConfig(_) | DiffError::Mismatch { .. } => ErrorClass::Config,
            DiffError::NonFinite { .. } => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}

/// Gaussian predictive distribution for one instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbPrediction {
    pub mean: f64,
    pub variance: f64,
}

/// Per-instance head outputs recorded on a tape, each an `n x 1` column.
#[derive(Debug, Clone, Copy)]
pub struct HeadOutputs {
    pub mean: Var,
    pub var_pre: Var,
}

/// A regressor with a mean head and a variance head.
pub trait ProbModel: Send + Sync {
    type Input: Sync;

    /// Model family tag stored in checkpoints.
    const KIND: &'static str;

    fn layout(&self) -> Layout;

    /// Deterministic in `seed`.
    fn init_params(&self, seed: u64) -> ParamVector;

    fn min_variance(&self) -> f64;

    /// Extensive size of an input (atom count for molecules), used by per-atom
    /// target standardisation.
    fn extent(&self, _input: &Self::Input) -> f64 {
        1.0
    }

    fn record(
        &self,
        tape: &mut Tape,
        params: &[Var],
        batch: &[&Self::Input],
    ) -> Result<HeadOutputs, DiffError>;
}

/// Affine map between target units and the standardised units the network is
/// trained in: `y = scale * y_std + offset * extent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScaler {
    pub offset: f64,
    pub scale: f64,
    pub per_atom: bool,
}

impl Default for TargetScaler {
    fn default() -> Self {
        Self::identity()
    }
}

impl TargetScaler {
    pub fn identity() -> Self {
        Self {
            offset: 0.0,
            scale: 1.0,
            per_atom: false,
        }
    }

    /// Mean/std standardisation of `targets`; with `per_atom` the offset is the mean
    /// per-extent value and the scale the std of the per-extent-centred residual.
    pub fn fit(targets: &[f64], extents: &[f64], per_atom: bool) -> Self {
        if targets.is_empty() {
            return Self::identity();
        }
        let n = targets.len() as f64;
        let offset = if per_atom {
            targets.iter().zip(extents).map(|(y, e)| y / e).sum::<f64>() / n
        } else {
            targets.iter().sum::<f64>() / n
        };
        let centred: Vec<f64> = targets
            .iter()
            .zip(extents)
            .map(|(y, e)| y - offset * if per_atom { *e } else { 1.0 })
            .collect();
        let mean_c = centred.iter().sum::<f64>() / n;
        let var = centred.iter().map(|c| (c - mean_c).powi(2)).sum::<f64>() / n;
        let scale = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        Self {
            offset,
            scale,
            per_atom,
        }
    }

    fn shift(&self, extent: f64) -> f64 {
        self.offset * if self.per_atom { extent } else { 1.0 }
    }

    pub fn standardize(&self, y: f64, extent: f64) -> f64 {
        (y - self.shift(extent)) / self.scale
    }

    pub fn unstandardize_mean(&self, m: f64, extent: f64) -> f64 {
        self.scale * m + self.shift(extent)
    }
}

/// Weights of the training objective `lambda * MSE + (1 - lambda) * NLL`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda: f64,
    /// Adds `0.5 ln 2 pi` to each NLL term; it does not change the gradient.
    pub include_constant: bool,
}

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;

/// Records the interpolated objective for a batch in standardised units and returns
/// the 1x1 loss node.
pub fn record_objective<M: ProbModel>(
    model: &M,
    tape: &mut Tape,
    leaves: &[Var],
    scaler: &TargetScaler,
    batch: &[&M::Input],
    targets: &[f64],
    weights: LossWeights,
) -> Result<Var, DiffError> {
    assert_eq!(batch.len(), targets.len());
    let heads = model.record(tape, leaves, batch)?;
    let standardized: Vec<f64> = batch
        .iter()
        .zip(targets)
        .map(|(x, y)| scaler.standardize(*y, model.extent(x)))
        .collect();
    let t = tape.column(&standardized);
    let floor = model.min_variance() / (scaler.scale * scaler.scale);

    let resid = tape.sub(t, heads.mean);
    let sq = tape.square(resid);
    let sp = tape.softplus(heads.var_pre);
    let var = tape.add_scalar(sp, floor);
    let ratio = tape.div(sq, var);
    let logv = tape.ln(var);
    let nll2 = tape.add(ratio, logv);
    let mut nll = tape.scale(nll2, 0.5);
    if weights.include_constant {
        nll = tape.add_scalar(nll, HALF_LN_2PI);
    }
    let mse_part = tape.scale(sq, weights.lambda);
    let nll_part = tape.scale(nll, 1.0 - weights.lambda);
    let per_point = tape.add(mse_part, nll_part);
    let loss = tape.mean(per_point);
    tape.ensure_finite(loss, "loss")?;
    Ok(loss)
}

/// Objective value and its exact gradient with respect to every parameter.
pub fn loss_and_gradient<M: ProbModel>(
    model: &M,
    params: &ParamVector,
    scaler: &TargetScaler,
    batch: &[&M::Input],
    targets: &[f64],
    weights: LossWeights,
) -> Result<(f64, ParamVector), DiffError> {
    let mut tape = Tape::new();
    let leaves = params.leaves(&mut tape);
    let loss = record_objective(model, &mut tape, &leaves, scaler, batch, targets, weights)?;
    let grads = tape.backward(loss);
    Ok((tape.scalar(loss), params.gradient_from(&grads, &leaves)))
}

const PREDICT_CHUNK: usize = 256;

/// Predictions in target units: `mean = scale * m + shift`,
/// `variance = scale^2 * softplus(z) + min_variance`.
pub fn predict<M: ProbModel>(
    model: &M,
    params: &ParamVector,
    scaler: &TargetScaler,
    inputs: &[&M::Input],
) -> Result<Vec<ProbPrediction>, DiffError> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(PREDICT_CHUNK) {
        let mut tape = Tape::new();
        let leaves = params.leaves(&mut tape);
        let heads = model.record(&mut tape, &leaves, chunk)?;
        let (m, z) = (tape.value(heads.mean), tape.value(heads.var_pre));
        for (i, x) in chunk.iter().enumerate() {
            let mean = scaler.unstandardize_mean(m[[i, 0]], model.extent(x));
            let variance =
                scaler.scale * scaler.scale * tape::softplus(z[[i, 0]]) + model.min_variance();
            if !mean.is_finite() || !variance.is_finite() {
                return Err(DiffError::NonFinite {
                    layer: "output".into(),
                });
            }
            out.push(ProbPrediction { mean, variance });
        }
    }
    Ok(out)
}

/// Single-input prediction with identity scaling.
pub fn forward<M: ProbModel>(
    model: &M,
    params: &ParamVector,
    input: &M::Input,
) -> Result<ProbPrediction, DiffError> {
    Ok(predict(model, params, &TargetScaler::identity(), &[input])?[0])
}

/// A trained network: architecture, parameters and target scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Member<M> {
    pub model: M,
    pub params: ParamVector,
    pub scaler: TargetScaler,
}

impl<M: ProbModel> Member<M> {
    pub fn predict(&self, inputs: &[&M::Input]) -> Result<Vec<ProbPrediction>, DiffError> {
        predict(&self.model, &self.params, &self.scaler, inputs)
    }
}

/// Uniform fan-in initialisation bound for a layer with `fan_in` inputs
/// (unit-variance inputs give unit-variance pre-activations).
pub(crate) fn fan_in_bound(fan_in: usize) -> f64 {
    (3.0 / fan_in.max(1) as f64).sqrt()
}

/// Bias making `softplus(bias) = 1`.
pub(crate) const UNIT_SOFTPLUS_BIAS: f64 = 0.541_324_854_612_918_1;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_softplus_bias() {
        assert!((tape::softplus(UNIT_SOFTPLUS_BIAS) - 1.0).abs() < 1e-15);
        assert!((HALF_LN_2PI - 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn scaler_round_trip() {
        let ys = [1.0, 3.0, 8.0];
        let ext = [1.0, 2.0, 4.0];
        for per_atom in [false, true] {
            let s = TargetScaler::fit(&ys, &ext, per_atom);
            for (y, e) in ys.iter().zip(&ext) {
                let back = s.unstandardize_mean(s.standardize(*y, *e), *e);
                assert!((back - y).abs() < 1e-12);
            }
        }
        let flat = TargetScaler::fit(&[2.0, 2.0], &[1.0, 1.0], false);
        assert_eq!(flat.scale, 1.0);
        assert_eq!(flat.offset, 2.0);
    }
}
