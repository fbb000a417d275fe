//! Error and calibration metrics over ensemble predictions.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::ensemble::{mixture_nll, EnsemblePrediction, NllMode};

pub const REPORT_FORMAT: &str = "uqmol-report";

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("metric needs a non-empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("cannot make {k} bins from {n} instances")]
    TooManyBins { k: usize, n: usize },
    #[error("bin {0} has zero root mean variance")]
    ZeroRmv(usize),
    #[error("mean predicted sigma is {0}; CV is undefined")]
    ZeroMeanSigma(f64),
    #[error("quantile levels must be strictly increasing inside (0, 1)")]
    BadLevels,
    #[error("instance {index}: {message}")]
    InvalidInput { index: usize, message: String },
    #[error("unknown option `{0}`")]
    UnknownOption(String),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinRule {
    /// Sort by variance and split into `K` groups of (nearly) equal size; the
    /// remainder goes one each to the leading bins.
    #[default]
    EqualCount,
    /// `K` equal-width intervals of predicted sigma; empty intervals are dropped.
    EqualWidth,
}

impl FromStr for BinRule {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "equal-count" | "equal_count" => Ok(BinRule::EqualCount),
            "equal-width" | "equal_width" => Ok(BinRule::EqualWidth),
            _ => Err(MetricError::UnknownOption(s.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin {
    pub index: usize,
    pub count: usize,
    pub rmv: f64,
    pub rmse: f64,
    pub aleatoric_share: f64,
    /// Sum of squared errors in the bin.
    pub sse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityBins {
    pub k: usize,
    pub rule: BinRule,
    pub bins: Vec<Bin>,
}

impl ReliabilityBins {
    pub fn total_count(&self) -> usize {
        self.bins.iter().map(|b| b.count).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("bin_index,count,rmv,rmse,aleatoric_share\n");
        for b in &self.bins {
            writeln!(s, "{},{},{},{},{}", b.index, b.count, b.rmv, b.rmse, b.aleatoric_share).unwrap();
        }
        s
    }
}

/// One instance for binning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinEntry {
    pub variance: f64,
    pub sq_error: f64,
    pub aleatoric_share: f64,
}

/// Equal-count bins over `(variance, squared error)` pairs.
pub fn make_bins(pairs: &[(f64, f64)], k: usize) -> Result<ReliabilityBins, MetricError> {
    let entries: Vec<BinEntry> = pairs
        .iter()
        .map(|&(variance, sq_error)| BinEntry {
            variance,
            sq_error,
            aleatoric_share: 1.0,
        })
        .collect();
    bin_entries(&entries, k, BinRule::EqualCount)
}

pub fn bin_entries(entries: &[BinEntry], k: usize, rule: BinRule) -> Result<ReliabilityBins, MetricError> {
    let n = entries.len();
    if k == 0 || k > n {
        return Err(MetricError::TooManyBins { k, n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| entries[a].variance.total_cmp(&entries[b].variance));

    let groups: Vec<&[usize]> = match rule {
        BinRule::EqualCount => {
            let (base, extra) = (n / k, n % k);
            let mut start = 0;
            (0..k)
                .map(|i| {
                    let len = base + usize::from(i < extra);
                    let g = &order[start..start + len];
                    start += len;
                    g
                })
                .collect()
        }
        BinRule::EqualWidth => {
            let lo = entries[order[0]].variance.sqrt();
            let hi = entries[order[n - 1]].variance.sqrt();
            let width = (hi - lo) / k as f64;
            let mut groups = Vec::new();
            let mut start = 0;
            for i in 0..k {
                let end = if i + 1 == k {
                    n
                } else {
                    let edge = lo + width * (i + 1) as f64;
                    start + order[start..].partition_point(|&j| entries[j].variance.sqrt() < edge)
                };
                if end > start {
                    groups.push(&order[start..end]);
                }
                start = end;
            }
            groups
        }
    };

    let bins = groups
        .into_iter()
        .enumerate()
        .map(|(index, g)| {
            let c = g.len() as f64;
            let mv = g.iter().map(|&i| entries[i].variance).sum::<f64>() / c;
            let sse = g.iter().map(|&i| entries[i].sq_error).sum::<f64>();
            Bin {
                index,
                count: g.len(),
                rmv: mv.sqrt(),
                rmse: (sse / c).sqrt(),
                aleatoric_share: g.iter().map(|&i| entries[i].aleatoric_share).sum::<f64>() / c,
                sse,
            }
        })
        .collect();
    Ok(ReliabilityBins { k, rule, bins })
}

/// `(1/K) sum_k |RMV_k - RMSE_k| / RMV_k`.
pub fn ence(bins: &ReliabilityBins) -> Result<f64, MetricError> {
    if bins.bins.is_empty() {
        return Err(MetricError::Empty);
    }
    let mut s = 0.0;
    for b in &bins.bins {
        if !(b.rmv > 0.0) {
            return Err(MetricError::ZeroRmv(b.index));
        }
        s += (b.rmv - b.rmse).abs() / b.rmv;
    }
    Ok(s / bins.bins.len() as f64)
}

/// Population standard deviation of `sigmas` over their mean.
pub fn coefficient_of_variation(sigmas: &[f64]) -> Result<f64, MetricError> {
    if sigmas.is_empty() {
        return Err(MetricError::Empty);
    }
    let n = sigmas.len() as f64;
    let mean = sigmas.iter().sum::<f64>() / n;
    if !(mean > 0.0) {
        return Err(MetricError::ZeroMeanSigma(mean));
    }
    let var = sigmas.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    Ok(var.sqrt() / mean)
}

/// 99 levels `0.01, 0.02, ..., 0.99`.
pub fn default_levels() -> Vec<f64> {
    (1..=99).map(|i| i as f64 / 100.0).collect()
}

fn check_levels(levels: &[f64]) -> Result<(), MetricError> {
    if levels.iter().any(|p| !(*p > 0.0 && *p < 1.0)) || levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(MetricError::BadLevels);
    }
    Ok(())
}

/// Observed frequency of `y <= mu + sigma * Phi^-1(p)` for each level `p`.
pub fn quantile_curve(
    preds: &[(f64, f64)],
    ys: &[f64],
    levels: &[f64],
) -> Result<Vec<(f64, f64)>, MetricError> {
    if preds.len() != ys.len() {
        return Err(MetricError::LengthMismatch(preds.len(), ys.len()));
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    check_levels(levels)?;
    let normal = Normal::standard();
    // Standardised residuals, sorted once; each level is then a binary search.
    let mut z: Vec<f64> = preds
        .iter()
        .zip(ys)
        .map(|(&(mu, sigma), &y)| (y - mu) / sigma)
        .collect();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    Ok(levels
        .iter()
        .map(|&p| {
            let q = normal.inverse_cdf(p);
            (p, z.partition_point(|&v| v <= q) as f64 / n)
        })
        .collect())
}

/// Quantile curve under the exact mixture; the mixture quantile is found by bisection.
pub fn quantile_curve_mixture(
    preds: &[EnsemblePrediction],
    ys: &[f64],
    levels: &[f64],
) -> Result<Vec<(f64, f64)>, MetricError> {
    if preds.len() != ys.len() {
        return Err(MetricError::LengthMismatch(preds.len(), ys.len()));
    }
    if preds.is_empty() {
        return Err(MetricError::Empty);
    }
    check_levels(levels)?;
    // y <= q_p  iff  F(y) <= p, since the mixture CDF is strictly increasing.
    let mut u: Vec<f64> = preds.iter().zip(ys).map(|(p, &y)| p.cdf(y)).collect();
    u.sort_by(f64::total_cmp);
    let n = u.len() as f64;
    Ok(levels
        .iter()
        .map(|&p| (p, u.partition_point(|&v| v <= p) as f64 / n))
        .collect())
}

/// Mixture quantile by bisection on the CDF.
pub fn mixture_quantile(pred: &EnsemblePrediction, p: f64) -> f64 {
    let spread = pred
        .member_variances
        .iter()
        .cloned()
        .fold(0.0, f64::max)
        .sqrt();
    let lo_m = pred.member_means.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi_m = pred.member_means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut lo, mut hi) = (lo_m - 40.0 * spread, hi_m + 40.0 * spread);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if pred.cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * (1.0 + mid.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// `sum_p (observed_p - p)^2`.
pub fn quantile_se(curve: &[(f64, f64)]) -> f64 {
    curve.iter().map(|(p, o)| (o - p).powi(2)).sum()
}

pub fn quantile_csv(curve: &[(f64, f64)]) -> String {
    let mut s = String::from("level,observed\n");
    for (p, o) in curve {
        writeln!(s, "{p},{o}").unwrap();
    }
    s
}

fn aligned<T>(a: &[T], b: &[f64]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn mae(means: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    aligned(means, ys)?;
    Ok(means.iter().zip(ys).map(|(m, y)| (y - m).abs()).sum::<f64>() / ys.len() as f64)
}

pub fn rmse(means: &[f64], ys: &[f64]) -> Result<f64, MetricError> {
    aligned(means, ys)?;
    Ok((means.iter().zip(ys).map(|(m, y)| (y - m).powi(2)).sum::<f64>() / ys.len() as f64).sqrt())
}

/// Mean Gaussian NLL with the `ln 2 pi` constant.
pub fn mean_nll(preds: &[EnsemblePrediction], ys: &[f64], mode: NllMode) -> Result<f64, MetricError> {
    aligned(preds, ys)?;
    Ok(preds.iter().zip(ys).map(|(p, &y)| mixture_nll(p, y, mode)).sum::<f64>() / ys.len() as f64)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum QuantileMode {
    #[default]
    Gaussian,
    Mixture,
}

impl FromStr for QuantileMode {
    type Err = MetricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(QuantileMode::Gaussian),
            "mixture" | "exact" => Ok(QuantileMode::Mixture),
            _ => Err(MetricError::UnknownOption(s.into())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub k: usize,
    pub bin_rule: BinRule,
    pub nll_mode: NllMode,
    pub quantile_mode: QuantileMode,
    pub levels: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 10,
            bin_rule: BinRule::EqualCount,
            nll_mode: NllMode::Gaussian,
            quantile_mode: QuantileMode::Gaussian,
            levels: default_levels(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleSummary {
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub format: String,
    pub version: u32,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "MAE")]
    pub mae: f64,
    #[serde(rename = "RMSE")]
    pub rmse: f64,
    #[serde(rename = "NLL")]
    pub nll: f64,
    #[serde(rename = "ENCE")]
    pub ence: f64,
    #[serde(rename = "CV")]
    pub cv: f64,
    #[serde(rename = "quantile_SE")]
    pub quantile_se: f64,
    pub mean_aleatoric: f64,
    pub mean_epistemic: f64,
    pub calibrated: bool,
    /// Mean and SD of the calibration scale factors `s^2_n` on this set.
    pub scale_factors: Option<ScaleSummary>,
    pub config: EvalConfig,
    pub bins: ReliabilityBins,
    pub quantile_curve: Vec<(f64, f64)>,
    pub flags: Vec<String>,
}

impl CalibrationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

pub fn report(
    preds: &[EnsemblePrediction],
    ys: &[f64],
    config: &EvalConfig,
) -> Result<CalibrationReport, MetricError> {
    aligned(preds, ys)?;
    for (index, p) in preds.iter().enumerate() {
        if !(p.total_variance > 0.0 && p.total_variance.is_finite() && p.mean.is_finite()) {
            return Err(MetricError::InvalidInput {
                index,
                message: format!("mean {} variance {}", p.mean, p.total_variance),
            });
        }
    }
    if !ys.iter().all(|y| y.is_finite()) {
        let index = ys.iter().position(|y| !y.is_finite()).unwrap();
        return Err(MetricError::InvalidInput {
            index,
            message: "non-finite target".into(),
        });
    }
    let means: Vec<f64> = preds.iter().map(|p| p.mean).collect();
    let sigmas: Vec<f64> = preds.iter().map(|p| p.sigma()).collect();
    let entries: Vec<BinEntry> = preds
        .iter()
        .zip(ys)
        .map(|(p, y)| BinEntry {
            variance: p.total_variance,
            sq_error: (y - p.mean).powi(2),
            aleatoric_share: p.aleatoric / p.total_variance,
        })
        .collect();
    let bins = bin_entries(&entries, config.k, config.bin_rule)?;
    let curve = match config.quantile_mode {
        QuantileMode::Gaussian => {
            let ms: Vec<(f64, f64)> = means.iter().cloned().zip(sigmas.iter().cloned()).collect();
            quantile_curve(&ms, ys, &config.levels)?
        }
        QuantileMode::Mixture => quantile_curve_mixture(preds, ys, &config.levels)?,
    };
    let n = preds.len() as f64;
    let rmse_v = rmse(&means, ys)?;
    let ence_v = ence(&bins)?;
    let cv = coefficient_of_variation(&sigmas)?;

    let mut flags = Vec::new();
    if bins.bins.iter().any(|b| b.rmse == 0.0) {
        flags.push("zero-error bins: ENCE is dominated by RMV in those bins".into());
    }
    let rmv_all = (preds.iter().map(|p| p.total_variance).sum::<f64>() / n).sqrt();
    if rmse_v < 1e-3 * rmv_all {
        flags.push("errors are negligible relative to predicted uncertainty".into());
    }
    if cv == 0.0 {
        flags.push("constant predicted uncertainty (CV = 0)".into());
    }

    Ok(CalibrationReport {
        format: REPORT_FORMAT.into(),
        version: crate::SCHEMA_VERSION,
        n: preds.len(),
        mae: mae(&means, ys)?,
        rmse: rmse_v,
        nll: mean_nll(preds, ys, config.nll_mode)?,
        ence: ence_v,
        cv,
        quantile_se: quantile_se(&curve),
        mean_aleatoric: preds.iter().map(|p| p.aleatoric).sum::<f64>() / n,
        mean_epistemic: preds.iter().map(|p| p.epistemic).sum::<f64>() / n,
        calibrated: false,
        scale_factors: None,
        config: config.clone(),
        bins,
        quantile_curve: curve,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand_distr::{Distribution, Normal as RNormal, Uniform};

    use super::*;
    use crate::seed;

    fn bins_from(rmv: &[f64], rmse: &[f64]) -> ReliabilityBins {
        ReliabilityBins {
            k: rmv.len(),
            rule: BinRule::EqualCount,
            bins: rmv
                .iter()
                .zip(rmse)
                .enumerate()
                .map(|(index, (&rmv, &rmse))| Bin {
                    index,
                    count: 1,
                    rmv,
                    rmse,
                    aleatoric_share: 1.0,
                    sse: rmse * rmse,
                })
                .collect(),
        }
    }

    #[test]
    fn ence_examples() {
        assert_eq!(ence(&bins_from(&[1.0, 2.0], &[1.0, 1.0])).unwrap(), 0.25);
        assert_eq!(ence(&bins_from(&[1.5, 3.0], &[1.5, 3.0])).unwrap(), 0.0);
        assert_eq!(ence(&bins_from(&[2.0], &[1.0])).unwrap(), 0.5);
        assert!(matches!(ence(&bins_from(&[0.0], &[1.0])), Err(MetricError::ZeroRmv(0))));
    }

    #[test]
    fn cv_examples() {
        assert_eq!(coefficient_of_variation(&[1.0, 1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(coefficient_of_variation(&[1.0, 3.0]).unwrap(), 0.5);
        assert!(coefficient_of_variation(&[0.0, 0.0]).is_err());
        assert!(coefficient_of_variation(&[]).is_err());
    }

    #[test]
    fn bin_examples() {
        let b = make_bins(&[(1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.0)], 2).unwrap();
        assert_eq!(b.bins[0].rmv, 1.5f64.sqrt());
        assert_eq!(b.bins[1].rmv, 3.5f64.sqrt());
        let one = make_bins(&[(1.0, 1.0), (3.0, 4.0)], 1).unwrap();
        assert_eq!(one.bins[0].rmv, 2.0f64.sqrt());
        assert!(matches!(make_bins(&[(1.0, 1.0)], 2), Err(MetricError::TooManyBins { .. })));
        let counts: Vec<usize> = make_bins(&vec![(1.0, 0.0); 23], 5).unwrap().bins.iter().map(|b| b.count).collect();
        assert_eq!(counts, vec![5, 5, 5, 4, 4]);
    }

    #[test]
    fn ties_keep_input_order() {
        let pairs = [(1.0, 9.0), (1.0, 0.0), (1.0, 4.0), (1.0, 1.0)];
        let b = make_bins(&pairs, 2).unwrap();
        assert_eq!(b.bins[0].sse, 9.0);
        assert_eq!(b.bins[1].sse, 5.0);
    }

    #[test]
    fn equal_width_partitions() {
        let pairs: Vec<(f64, f64)> = [0.01, 0.04, 0.05, 1.0, 4.0].iter().map(|&v| (v, 1.0)).collect();
        let entries: Vec<BinEntry> = pairs
            .iter()
            .map(|&(variance, sq_error)| BinEntry { variance, sq_error, aleatoric_share: 0.5 })
            .collect();
        let b = bin_entries(&entries, 3, BinRule::EqualWidth).unwrap();
        assert_eq!(b.total_count(), 5);
        assert!(b.bins.windows(2).all(|w| w[0].rmv <= w[1].rmv));
    }

    #[test]
    fn quantile_examples() {
        let preds = vec![(0.0, 1.0); 4];
        let c = quantile_curve(&preds, &[-1.0, -0.5, 0.5, 1.0], &[0.5]).unwrap();
        assert_eq!(c, vec![(0.5, 0.5)]);
        let low = quantile_curve(&preds, &[-100.0; 4], &default_levels()).unwrap();
        assert!(low.iter().all(|(_, o)| *o == 1.0));
        assert!(quantile_curve(&preds, &[0.0; 4], &[0.5, 0.4]).is_err());
        assert!((quantile_se(&[(0.1, 0.2), (0.5, 0.5)]) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn sampled_gaussian_is_calibrated() {
        let mut rng = seed::rng(5);
        let n = 100_000;
        let sig = Uniform::new(0.1, 2.0).unwrap();
        let mut preds = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for _ in 0..n {
            let s = sig.sample(&mut rng);
            let mu = 3.0 * s - 1.0;
            preds.push((mu, s));
            ys.push(RNormal::new(mu, s).unwrap().sample(&mut rng));
        }
        let c = quantile_curve(&preds, &ys, &default_levels()).unwrap();
        let worst = c.iter().map(|(p, o)| (p - o).abs()).fold(0.0, f64::max);
        assert!(worst < 0.01, "{worst}");
    }

    #[test]
    fn mixture_quantiles_match_bisection_definition() {
        let p = EnsemblePrediction::from_members(vec![-1.0, 2.0], vec![0.5, 0.2]).unwrap();
        for level in [0.05, 0.5, 0.93] {
            let q = mixture_quantile(&p, level);
            assert!((p.cdf(q) - level).abs() < 1e-12);
        }
        let ys = [mixture_quantile(&p, 0.3) - 1e-9, mixture_quantile(&p, 0.7) - 1e-9];
        let c = quantile_curve_mixture(&[p.clone(), p], &ys, &[0.3, 0.5, 0.7]).unwrap();
        assert_eq!(c, vec![(0.3, 0.5), (0.5, 0.5), (0.7, 1.0)]);
    }

    #[test]
    fn report_fields_and_flags() {
        let preds: Vec<EnsemblePrediction> = (0..20)
            .map(|i| EnsemblePrediction::from_members(vec![i as f64], vec![1e-6 * (1.0 + i as f64)]).unwrap())
            .collect();
        let ys: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let r = report(&preds, &ys, &EvalConfig::default()).unwrap();
        assert_eq!(r.mae, 0.0);
        assert_eq!(r.rmse, 0.0);
        assert!((r.ence - 1.0).abs() < 1e-12);
        assert!(!r.flags.is_empty());
        let json: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        for key in ["MAE", "RMSE", "NLL", "ENCE", "CV", "quantile_SE", "bins", "quantile_curve"] {
            assert!(json.get(key).is_some(), "{key}");
        }
        let bad = EvalConfig { k: 21, ..EvalConfig::default() };
        assert!(matches!(report(&preds, &ys, &bad), Err(MetricError::TooManyBins { .. })));
        assert!(r.bins.to_csv().starts_with("bin_index,count,rmv,rmse,aleatoric_share\n"));
        assert!(quantile_csv(&r.quantile_curve).starts_with("level,observed\n0.01,"));
    }

    proptest! {
        #[test]
        fn cv_scale_invariant(s in prop::collection::vec(0.01..10.0f64, 1..30), c in 0.001..1000.0f64) {
            let a = coefficient_of_variation(&s).unwrap();
            let scaled: Vec<f64> = s.iter().map(|x| x * c).collect();
            let b = coefficient_of_variation(&scaled).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }

        #[test]
        fn bins_conserve(pairs in prop::collection::vec((0.01..5.0f64, 0.0..5.0f64), 1..60), k in 1usize..12) {
            prop_assume!(k <= pairs.len());
            let b = make_bins(&pairs, k).unwrap();
            prop_assert_eq!(b.total_count(), pairs.len());
            prop_assert!(b.bins.windows(2).all(|w| w[0].rmv <= w[1].rmv));
            let mse: f64 = pairs.iter().map(|p| p.1).sum::<f64>() / pairs.len() as f64;
            let binned: f64 = b.bins.iter().map(|x| x.sse).sum::<f64>() / pairs.len() as f64;
            prop_assert!((mse - binned).abs() <= 1e-10);
            prop_assert!(ence(&b).unwrap() >= 0.0);
        }

        #[test]
        fn mae_at_most_rmse(r in prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64), 1..50)) {
            let (m, y): (Vec<f64>, Vec<f64>) = r.into_iter().unzip();
            prop_assert!(mae(&m, &y).unwrap() <= rmse(&m, &y).unwrap() + 1e-12);
        }

        #[test]
        fn curve_monotone(r in prop::collection::vec((-3.0..3.0f64, 0.1..2.0f64, -3.0..3.0f64), 1..50)) {
            let preds: Vec<(f64, f64)> = r.iter().map(|t| (t.0, t.1)).collect();
            let ys: Vec<f64> = r.iter().map(|t| t.2).collect();
            let c = quantile_curve(&preds, &ys, &default_levels()).unwrap();
            prop_assert!(c.windows(2).all(|w| w[0].1 <= w[1].1));
        }
    }
}
