use serde::{Deserialize, Serialize};

use super::{check_header, CalibrationError};
use crate::ensemble::EnsemblePrediction;

pub const AFFINE_FORMAT: &str = "uqmol-affine";
pub const DEFAULT_HUBER_DELTA: f64 = 1.35;

const MAX_ITERATIONS: usize = 100;
const TOLERANCE: f64 = 1e-10;

/// `y_corrected = coefficient * y + intercept`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineCorrection {
    pub format: String,
    pub version: u32,
    pub coefficient: f64,
    pub intercept: f64,
    pub huber_delta: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n: usize,
}

impl AffineCorrection {
    pub fn new(coefficient: f64, intercept: f64) -> Self {
        Self {
            format: AFFINE_FORMAT.into(),
            version: crate::SCHEMA_VERSION,
            coefficient,
            intercept,
            huber_delta: DEFAULT_HUBER_DELTA,
            iterations: 0,
            converged: true,
            n: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, CalibrationError> {
        let c: Self = serde_json::from_str(text).map_err(|e| CalibrationError::Format {
            field: "json".into(),
            message: e.to_string(),
        })?;
        check_header(&c.format, AFFINE_FORMAT, c.version)?;
        Ok(c)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("affine correction serialises")
    }
}

fn weighted_line(x: &[f64], y: &[f64], w: &[f64]) -> Option<(f64, f64)> {
    let sw: f64 = w.iter().sum();
    let xm = x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let ym = y.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for ((&xi, &yi), &wi) in x.iter().zip(y).zip(w) {
        sxx += wi * (xi - xm) * (xi - xm);
        sxy += wi * (xi - xm) * (yi - ym);
    }
    if !(sxx > 0.0) {
        return None;
    }
    let a = sxy / sxx;
    Some((a, ym - a * xm))
}

/// Ordinary least squares `observed ~ a * predicted + b`.
pub fn fit_ols(predicted: &[f64], observed: &[f64]) -> Result<(f64, f64), CalibrationError> {
    validate(predicted, observed)?;
    weighted_line(predicted, observed, &vec![1.0; predicted.len()])
        .ok_or(CalibrationError::DegeneratePredictor)
}

fn validate(predicted: &[f64], observed: &[f64]) -> Result<(), CalibrationError> {
    if predicted.len() != observed.len() {
        return Err(CalibrationError::LengthMismatch(predicted.len(), observed.len()));
    }
    if predicted.len() < 2 {
        return Err(CalibrationError::TooFewPoints(predicted.len()));
    }
    if let Some(i) = predicted.iter().chain(observed).position(|v| !v.is_finite()) {
        return Err(CalibrationError::InvalidInput {
            index: i % predicted.len(),
            message: "non-finite value".into(),
        });
    }
    Ok(())
}

/// Huber regression by iteratively reweighted least squares, started from OLS.
/// Residuals are used unscaled, so `delta` is in target units.
pub fn fit_huber(
    predicted: &[f64],
    observed: &[f64],
    delta: f64,
) -> Result<AffineCorrection, CalibrationError> {
    if !(delta > 0.0) {
        return Err(CalibrationError::InvalidParameter(format!(
            "huber delta must be positive, got {delta}"
        )));
    }
    let (mut a, mut b) = fit_ols(predicted, observed)?;
    let mut w = vec![1.0; predicted.len()];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        for ((wi, &x), &y) in w.iter_mut().zip(predicted).zip(observed) {
            let r = (y - a * x - b).abs();
            *wi = if r <= delta { 1.0 } else { delta / r };
        }
        let (na, nb) =
            weighted_line(predicted, observed, &w).ok_or(CalibrationError::DegeneratePredictor)?;
        let change = (na - a).abs().max((nb - b).abs());
        a = na;
        b = nb;
        if change < TOLERANCE {
            converged = true;
            break;
        }
    }
    Ok(AffineCorrection {
        huber_delta: delta,
        iterations,
        converged,
        n: predicted.len(),
        ..AffineCorrection::new(a, b)
    })
}

/// Affine transform of the predictive Gaussian: means mapped, variances scaled by
/// `coefficient^2`.
pub fn apply_affine(corr: &AffineCorrection, pred: &EnsemblePrediction) -> EnsemblePrediction {
    let (c, b) = (corr.coefficient, corr.intercept);
    let c2 = c * c;
    EnsemblePrediction {
        mean: c * pred.mean + b,
        total_variance: c2 * pred.total_variance,
        aleatoric: c2 * pred.aleatoric,
        epistemic: c2 * pred.epistemic,
        member_means: pred.member_means.iter().map(|m| c * m + b).collect(),
        member_variances: pred.member_variances.iter().map(|v| c2 * v).collect(),
        m: pred.m,
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.3 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let c = fit_huber(&x, &y, DEFAULT_HUBER_DELTA).unwrap();
        assert!((c.coefficient - 2.0).abs() < 1e-8);
        assert!((c.intercept - 1.0).abs() < 1e-8);
        assert!(c.converged);
    }

    #[test]
    fn resists_outlier() {
        let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let mut y = x.clone();
        y[29] += 200.0;
        let (ols, _) = fit_ols(&x, &y).unwrap();
        let h = fit_huber(&x, &y, DEFAULT_HUBER_DELTA).unwrap();
        assert!((h.coefficient - 1.0).abs() < (ols - 1.0).abs());
        assert!((h.coefficient - 1.0).abs() < 0.05);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(matches!(
            fit_huber(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0], 1.35),
            Err(CalibrationError::DegeneratePredictor)
        ));
        assert!(matches!(
            fit_huber(&[1.0], &[1.0], 1.35),
            Err(CalibrationError::TooFewPoints(1))
        ));
        assert!(fit_huber(&[0.0, 1.0], &[0.0, 1.0], 0.0).is_err());
    }

    #[test]
    fn apply_examples() {
        let p = EnsemblePrediction::from_members(vec![1.0, 2.0], vec![0.5, 0.25]).unwrap();
        let id = apply_affine(&AffineCorrection::new(1.0, 0.0), &p);
        assert_eq!(id, p);
        let shifted = apply_affine(&AffineCorrection::new(1.0, -0.683), &p);
        assert!((shifted.mean - (p.mean - 0.683)).abs() < 1e-15);
        assert_eq!(shifted.total_variance, p.total_variance);
        let doubled = apply_affine(&AffineCorrection::new(2.0, 0.0), &p);
        assert!((doubled.total_variance - 4.0 * p.total_variance).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let c = AffineCorrection::new(1.0038, 1.1428);
        assert_eq!(AffineCorrection::from_json(&c.to_json()).unwrap(), c);
        let bad = c.to_json().replace("\"version\": 1", "\"version\": 3");
        assert!(AffineCorrection::from_json(&bad).is_err());
    }

    proptest! {
        #[test]
        fn large_delta_is_ols(
            a in -3.0..3.0f64, b in -5.0..5.0f64,
            noise in prop::collection::vec(-0.1..0.1f64, 10..40)
        ) {
            let x: Vec<f64> = (0..noise.len()).map(|i| i as f64 / 4.0).collect();
            let y: Vec<f64> = x.iter().zip(&noise).map(|(x, e)| a * x + b + e).collect();
            let (oa, ob) = fit_ols(&x, &y).unwrap();
            let h = fit_huber(&x, &y, 1e9).unwrap();
            prop_assert!((h.coefficient - oa).abs() < 1e-6);
            prop_assert!((h.intercept - ob).abs() < 1e-6);
        }
    }
}
