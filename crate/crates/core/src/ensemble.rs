//! Uniformly weighted Gaussian mixture over ensemble members.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffnet::{DiffError, Member, ProbModel, ProbPrediction};
use crate::training::LN_2PI;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("an ensemble needs at least one member")]
    Empty,
    #[error("{means} member means but {variances} member variances")]
    LengthMismatch { means: usize, variances: usize },
    #[error("member {index} has non-positive variance {value}")]
    NonPositiveVariance { index: usize, value: f64 },
    #[error("member {index}: {source}")]
    Member {
        index: usize,
        #[source]
        source: DiffError,
    },
    #[error("unknown mixture NLL mode `{0}` (expected gaussian or exact)")]
    UnknownMode(String),
}

/// Mixture prediction for one instance with its variance decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsemblePrediction {
    pub mean: f64,
    pub total_variance: f64,
    pub aleatoric: f64,
    pub epistemic: f64,
    pub member_means: Vec<f64>,
    pub member_variances: Vec<f64>,
    pub m: usize,
}

impl EnsemblePrediction {
    pub fn from_members(means: Vec<f64>, variances: Vec<f64>) -> Result<Self, EnsembleError> {
        let mean = mixture_mean(&means)?;
        let (total, aleatoric, epistemic) = mixture_variance(&means, &variances)?;
        Ok(Self {
            mean,
            total_variance: total,
            aleatoric,
            epistemic,
            m: means.len(),
            member_means: means,
            member_variances: variances,
        })
    }

    pub fn sigma(&self) -> f64 {
        self.total_variance.sqrt()
    }

    /// Mixture density `(1/M) sum_m N(y; mu_m, var_m)`.
    pub fn density(&self, y: f64) -> f64 {
        self.member_means
            .iter()
            .zip(&self.member_variances)
            .map(|(&m, &v)| normal_pdf(y, m, v))
            .sum::<f64>()
            / self.m as f64
    }

    /// Mixture CDF at `y`.
    pub fn cdf(&self, y: f64) -> f64 {
        self.member_means
            .iter()
            .zip(&self.member_variances)
            .map(|(&m, &v)| normal_cdf((y - m) / v.sqrt()))
            .sum::<f64>()
            / self.m as f64
    }
}

pub fn mixture_mean(means: &[f64]) -> Result<f64, EnsembleError> {
    if means.is_empty() {
        return Err(EnsembleError::Empty);
    }
    Ok(means.iter().sum::<f64>() / means.len() as f64)
}

/// `(total, aleatoric, epistemic)`; the epistemic part uses the centred form
/// `sum (mu_m - mu*)^2 / M`.
pub fn mixture_variance(means: &[f64], variances: &[f64]) -> Result<(f64, f64, f64), EnsembleError> {
    if means.len() != variances.len() {
        return Err(EnsembleError::LengthMismatch {
            means: means.len(),
            variances: variances.len(),
        });
    }
    let mu = mixture_mean(means)?;
    if let Some((index, &value)) = variances.iter().enumerate().find(|(_, v)| !(**v > 0.0)) {
        return Err(EnsembleError::NonPositiveVariance { index, value });
    }
    let m = means.len() as f64;
    let aleatoric = variances.iter().sum::<f64>() / m;
    let epistemic = means.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / m;
    let epistemic = if epistemic < 0.0 { 0.0 } else { epistemic };
    Ok((aleatoric + epistemic, aleatoric, epistemic))
}

/// Combines per-member predictions, `preds[m][i]` for member `m` and instance `i`.
pub fn combine(preds: &[Vec<ProbPrediction>]) -> Result<Vec<EnsemblePrediction>, EnsembleError> {
    let first = preds.first().ok_or(EnsembleError::Empty)?;
    (0..first.len())
        .map(|i| {
            EnsemblePrediction::from_members(
                preds.iter().map(|p| p[i].mean).collect(),
                preds.iter().map(|p| p[i].variance).collect(),
            )
        })
        .collect()
}

/// Runs every member over `inputs` and aggregates.
pub fn predict_ensemble<M: ProbModel>(
    members: &[Member<M>],
    inputs: &[&M::Input],
) -> Result<Vec<EnsemblePrediction>, EnsembleError> {
    if members.is_empty() {
        return Err(EnsembleError::Empty);
    }
    let per_member = members
        .iter()
        .enumerate()
        .map(|(index, m)| m.predict(inputs).map_err(|source| EnsembleError::Member { index, source }))
        .collect::<Result<Vec<_>, _>>()?;
    combine(&per_member)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NllMode {
    /// Moment-matched Gaussian `N(mu*, var*)`.
    #[default]
    Gaussian,
    /// Exact mixture density.
    Exact,
}

impl FromStr for NllMode {
    type Err = EnsembleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" => Ok(NllMode::Gaussian),
            "exact" => Ok(NllMode::Exact),
            _ => Err(EnsembleError::UnknownMode(s.into())),
        }
    }
}

pub fn mixture_nll(pred: &EnsemblePrediction, y: f64, mode: NllMode) -> f64 {
    match mode {
        NllMode::Gaussian => {
            let r = y - pred.mean;
            0.5 * (r * r / pred.total_variance + pred.total_variance.ln() + LN_2PI)
        }
        NllMode::Exact => {
            // log-sum-exp over members
            let logs: Vec<f64> = pred
                .member_means
                .iter()
                .zip(&pred.member_variances)
                .map(|(&m, &v)| -0.5 * ((y - m).powi(2) / v + v.ln() + LN_2PI))
                .collect();
            let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = logs.iter().map(|l| (l - top).exp()).sum();
            -(top + (s / pred.m as f64).ln())
        }
    }
}

pub(crate) fn normal_pdf(y: f64, mean: f64, var: f64) -> f64 {
    (-(y - mean).powi(2) / (2.0 * var)).exp() / (2.0 * std::f64::consts::PI * var).sqrt()
}

pub(crate) fn normal_cdf(z: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-z / std::f64::consts::SQRT_2)
}

/// Prediction table: `id,y,mu,var_total,var_aleatoric,var_epistemic,mu_0..,var_0..`.
pub fn predictions_csv(ids: &[&str], ys: &[f64], preds: &[EnsemblePrediction], m: usize) -> String {
    let mut s = prediction_header(m).join(",");
    s.push('\n');
    for ((id, y), p) in ids.iter().zip(ys).zip(preds) {
        write!(
            s,
            "{id},{y},{},{},{},{}",
            p.mean, p.total_variance, p.aleatoric, p.epistemic
        )
        .unwrap();
        for v in p.member_means.iter().chain(&p.member_variances) {
            write!(s, ",{v}").unwrap();
        }
        s.push('\n');
    }
    s
}

pub fn prediction_header(m: usize) -> Vec<String> {
    let mut h: Vec<String> = ["id", "y", "mu", "var_total", "var_aleatoric", "var_epistemic"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    h.extend((0..m).map(|i| format!("mu_{i}")));
    h.extend((0..m).map(|i| format!("var_{i}")));
    h
}
