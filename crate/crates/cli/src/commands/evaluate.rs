use std::path::Path;

use anyhow::Result;

use uqmol::calibrate::{apply_affine, apply_calibration, AffineCorrection, CalibrationMap};
use uqmol::ensemble::EnsemblePrediction;
use uqmol::evalmetrics::{quantile_csv, report, CalibrationReport, ScaleSummary};

use super::Context;
use crate::artifacts::{self, read_predictions, UsageError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Uncalibrated,
    Calibrated,
    Both,
}

fn scale_summary(map: &CalibrationMap, preds: &[EnsemblePrediction]) -> Option<ScaleSummary> {
    if preds.is_empty() {
        return None;
    }
    let s: Vec<f64> = preds.iter().map(|p| map.scale_factor(p.total_variance)).collect();
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let sd = (s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    Some(ScaleSummary { mean, sd })
}

fn emit(ctx: &Context, name: &str, r: &CalibrationReport) -> Result<()> {
    let dir = ctx.out.report(name);
    artifacts::write(&dir.join("report.json"), r.to_json())?;
    artifacts::write(&dir.join("bins.csv"), r.bins.to_csv())?;
    artifacts::write(&dir.join("quantiles.csv"), quantile_csv(&r.quantile_curve))?;
    println!(
        "{name}: N {} MAE {:.6} RMSE {:.6} NLL {:.6} ENCE {:.6} CV {:.6} quantile_SE {:.6}",
        r.n, r.mae, r.rmse, r.nll, r.ence, r.cv, r.quantile_se
    );
    Ok(())
}

pub fn run(ctx: &Context, predictions: Option<&Path>, variant: Variant) -> Result<()> {
    let path = predictions.map_or_else(|| ctx.out.predictions("test"), Path::to_path_buf);
    let table = read_predictions(&path)?;
    let k = ctx.config.eval.k;
    if k > table.preds.len() {
        return Err(UsageError(format!(
            "eval.k = {k} bins but only {} predictions in {}",
            table.preds.len(),
            path.display()
        ))
        .into());
    }
    let calibration = if variant == Variant::Uncalibrated {
        None
    } else {
        let p = ctx.out.calibration();
        if !p.exists() {
            return Err(UsageError(format!(
                "calibrated evaluation needs {}; run `uqmol recalibrate` first",
                p.display()
            ))
            .into());
        }
        let map = CalibrationMap::from_json(&artifacts::read(&p)?)?;
        let affine = match ctx.out.affine() {
            a if a.exists() => Some(AffineCorrection::from_json(&artifacts::read(&a)?)?),
            _ => None,
        };
        Some((map, affine))
    };
    ctx.echo_config("evaluate")?;

    if variant != Variant::Calibrated {
        emit(ctx, "uncalibrated", &report(&table.preds, &table.ys, &ctx.config.eval)?)?;
    }
    if let Some((map, affine)) = calibration {
        let preds: Vec<EnsemblePrediction> = table
            .preds
            .iter()
            .map(|p| {
                let c = apply_calibration(&map, p);
                match &affine {
                    Some(a) => apply_affine(a, &c),
                    None => c,
                }
            })
            .collect();
        let mut r = report(&preds, &table.ys, &ctx.config.eval)?;
        r.calibrated = true;
        r.scale_factors = scale_summary(&map, &table.preds);
        if affine.is_some() {
            r.flags.push("affine energy correction applied after variance recalibration".into());
        }
        emit(ctx, "calibrated", &r)?;
    }
    Ok(())
}
