use super::{TrainConfig, TrainError};
use crate::diffnet::ProbPrediction;

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Gaussian negative log likelihood `0.5 * ((y - mu)^2 / var + ln var + ln 2 pi)`.
pub fn nll_point(y: f64, mean: f64, variance: f64) -> Result<f64, TrainError> {
    if !(variance > 0.0) {
        return Err(TrainError::Domain(format!("variance must be positive, got {variance}")));
    }
    let r = y - mean;
    Ok(0.5 * (r * r / variance + variance.ln() + LN_2PI))
}

/// MSE weight at `step`: 1 during warmup, then linear down to 0 across the
/// interpolation steps, 0 afterwards.
pub fn lambda_schedule(step: usize, config: &TrainConfig) -> f64 {
    if step < config.warmup_steps {
        return 1.0;
    }
    let into = step - config.warmup_steps;
    if into >= config.interp_steps {
        return 0.0;
    }
    1.0 - into as f64 / config.interp_steps as f64
}

/// Mean over the batch of `lambda * (y - mu)^2 + (1 - lambda) * nll_point`, with the
/// `ln 2 pi` constant included.
pub fn batch_loss(
    preds: &[ProbPrediction],
    targets: &[f64],
    lambda: f64,
) -> Result<f64, TrainError> {
    if preds.is_empty() || preds.len() != targets.len() {
        return Err(TrainError::InvalidConfig(format!(
            "batch_loss needs equal non-empty lengths, got {} and {}",
            preds.len(),
            targets.len()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(TrainError::InvalidConfig(format!("lambda {lambda} outside [0, 1]")));
    }
    let mut total = 0.0;
    for (i, (p, &y)) in preds.iter().zip(targets).enumerate() {
        let r = y - p.mean;
        let term = lambda * r * r + (1.0 - lambda) * nll_point(y, p.mean, p.variance)?;
        if !term.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                instance: format!("#{i}"),
            });
        }
        total += term;
    }
    Ok(total / preds.len() as f64)
}
