//! Post-hoc variance recalibration and affine target correction.
//!
//! [`fit_isotonic`] fits a monotone map from the ensemble's total variance to the
//! empirical squared error of the ensemble mean. Applying it replaces the total
//! variance and rescales the aleatoric and epistemic parts by the same factor, so the
//! decomposition still adds up. The mean is never touched.

mod huber;
mod isotonic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ensemble::EnsemblePrediction;

pub use huber::{apply_affine, fit_huber, fit_ols, AffineCorrection, AFFINE_FORMAT, DEFAULT_HUBER_DELTA};
pub use isotonic::pava;

pub const CALIBRATION_FORMAT: &str = "uqmol-calibration";

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("calibration needs at least 2 points, got {0}")]
    TooFewPoints(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("point {index}: {message}")]
    InvalidInput { index: usize, message: String },
    #[error("predictor has zero variance; the affine fit is undetermined")]
    DegeneratePredictor,
    #[error("{0}")]
    InvalidParameter(String),
    #[error("calibration artifact field `{field}`: {message}")]
    Format { field: String, message: String },
}

pub(crate) fn check_header(format: &str, expected: &str, version: u32) -> Result<(), CalibrationError> {
    if format != expected {
        return Err(CalibrationError::Format {
            field: "format".into(),
            message: format!("got {format:?}, expected {expected:?}"),
        });
    }
    if version != crate::SCHEMA_VERSION {
        return Err(CalibrationError::Format {
            field: "version".into(),
            message: format!("got {version}, expected {}", crate::SCHEMA_VERSION),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    /// Left-constant steps: the value of the largest knot not above the input.
    #[default]
    Step,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MapKind {
    Isotonic {
        /// `(input variance, fitted variance)`, strictly increasing inputs.
        knots: Vec<(f64, f64)>,
        interpolation: Interpolation,
    },
    /// Constant factor `s^2` applied to every variance.
    Scalar { factor: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMetadata {
    pub n: usize,
    /// Mean and population SD of `s^2_n = f(var_n) / var_n` over the fit set.
    pub mean_scale: f64,
    pub sd_scale: f64,
    /// Coefficient of variation of the input standard deviations.
    pub input_cv: f64,
    pub split_rule: String,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationMap {
    pub format: String,
    pub version: u32,
    #[serde(flatten)]
    pub kind: MapKind,
    pub floor: f64,
    pub metadata: CalibrationMetadata,
}

fn check_inputs(variances: &[f64], sq_errors: &[f64], floor: f64) -> Result<(), CalibrationError> {
    if variances.len() != sq_errors.len() {
        return Err(CalibrationError::LengthMismatch(variances.len(), sq_errors.len()));
    }
    if variances.len() < 2 {
        return Err(CalibrationError::TooFewPoints(variances.len()));
    }
    if !(floor > 0.0) {
        return Err(CalibrationError::InvalidParameter(format!(
            "variance floor must be positive, got {floor}"
        )));
    }
    for (index, (&v, &e)) in variances.iter().zip(sq_errors).enumerate() {
        if !(v > 0.0) || !v.is_finite() {
            return Err(CalibrationError::InvalidInput {
                index,
                message: format!("variance {v} is not positive and finite"),
            });
        }
        if !(e >= 0.0) || !e.is_finite() {
            return Err(CalibrationError::InvalidInput {
                index,
                message: format!("squared error {e} is not non-negative and finite"),
            });
        }
    }
    Ok(())
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

impl CalibrationMap {
    fn finish(kind: MapKind, floor: f64, variances: &[f64]) -> Self {
        let mut map = Self {
            format: CALIBRATION_FORMAT.into(),
            version: crate::SCHEMA_VERSION,
            kind,
            floor,
            metadata: CalibrationMetadata {
                n: variances.len(),
                mean_scale: 0.0,
                sd_scale: 0.0,
                input_cv: 0.0,
                split_rule: "proportional".into(),
                warnings: Vec::new(),
            },
        };
        let factors: Vec<f64> = variances.iter().map(|&v| map.scale_factor(v)).collect();
        let (mean_scale, sd_scale) = mean_sd(&factors);
        let sigmas: Vec<f64> = variances.iter().map(|v| v.sqrt()).collect();
        let (ms, ss) = mean_sd(&sigmas);
        map.metadata.mean_scale = mean_scale;
        map.metadata.sd_scale = sd_scale;
        map.metadata.input_cv = ss / ms;
        if ss == 0.0 {
            map.metadata
                .warnings
                .push("input variances are constant (CV = 0); the map has a single knot".into());
        }
        map
    }

    /// Calibrated variance `f(v)`, never below the floor.
    pub fn eval(&self, v: f64) -> f64 {
        let out = match &self.kind {
            MapKind::Scalar { factor } => factor * v,
            MapKind::Isotonic {
                knots,
                interpolation,
            } => {
                let i = knots.partition_point(|(x, _)| *x <= v);
                if i == 0 {
                    knots[0].1
                } else if i == knots.len() {
                    knots[i - 1].1
                } else {
                    match interpolation {
                        Interpolation::Step => knots[i - 1].1,
                        Interpolation::Linear => {
                            let (x0, y0) = knots[i - 1];
                            let (x1, y1) = knots[i];
                            y0 + (y1 - y0) * (v - x0) / (x1 - x0)
                        }
                    }
                }
            }
        };
        out.max(self.floor)
    }

    /// Implied `s^2 = f(v) / v`.
    pub fn scale_factor(&self, v: f64) -> f64 {
        self.eval(v) / v
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        match &self.kind {
            MapKind::Isotonic { knots, .. } => knots,
            MapKind::Scalar { .. } => &[],
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("calibration map serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, CalibrationError> {
        let map: Self = serde_json::from_str(text).map_err(|e| CalibrationError::Format {
            field: "json".into(),
            message: e.to_string(),
        })?;
        check_header(&map.format, CALIBRATION_FORMAT, map.version)?;
        if let MapKind::Isotonic { knots, .. } = &map.kind {
            if knots.is_empty() {
                return Err(CalibrationError::Format {
                    field: "knots".into(),
                    message: "empty knot list".into(),
                });
            }
            if knots.windows(2).any(|w| !(w[0].0 < w[1].0 && w[0].1 <= w[1].1)) {
                return Err(CalibrationError::Format {
                    field: "knots".into(),
                    message: "knots must be strictly increasing in input and non-decreasing in output"
                        .into(),
                });
            }
        }
        Ok(map)
    }
}

/// Isotonic map from predicted variances to squared errors; fitted values are clamped
/// to `floor`.
pub fn fit_isotonic(
    variances: &[f64],
    sq_errors: &[f64],
    floor: f64,
    interpolation: Interpolation,
) -> Result<CalibrationMap, CalibrationError> {
    check_inputs(variances, sq_errors, floor)?;
    let (knots, _) = isotonic::fit_points(variances, sq_errors);
    let knots = knots.into_iter().map(|(x, y)| (x, y.max(floor))).collect();
    Ok(CalibrationMap::finish(
        MapKind::Isotonic {
            knots,
            interpolation,
        },
        floor,
        variances,
    ))
}

/// Baseline: one factor `s^2 = mean(e_n / var_n)`.
pub fn fit_scalar(variances: &[f64], sq_errors: &[f64], floor: f64) -> Result<CalibrationMap, CalibrationError> {
    check_inputs(variances, sq_errors, floor)?;
    let factor = variances.iter().zip(sq_errors).map(|(v, e)| e / v).sum::<f64>() / variances.len() as f64;
    Ok(CalibrationMap::finish(MapKind::Scalar { factor }, floor, variances))
}

/// Replaces the total variance with `f(total)` and rescales the aleatoric and
/// epistemic parts by `f(total) / total`.
pub fn apply_calibration(map: &CalibrationMap, pred: &EnsemblePrediction) -> EnsemblePrediction {
    let total = map.eval(pred.total_variance);
    let s = total / pred.total_variance;
    EnsemblePrediction {
        mean: pred.mean,
        total_variance: total,
        aleatoric: pred.aleatoric * s,
        epistemic: pred.epistemic * s,
        member_means: pred.member_means.clone(),
        member_variances: pred.member_variances.clone(),
        m: pred.m,
    }
}
