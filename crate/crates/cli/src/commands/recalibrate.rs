use std::path::Path;

use anyhow::{Context as _, Result};

use uqmol::calibrate::{fit_huber, fit_isotonic, fit_scalar};

use super::Context;
use crate::artifacts::{self, read_predictions, DataError};

pub const PAIRED_HEADER: &str = "id,x,y";

/// `(x, y)` columns of a paired-energy CSV with header `id,x,y`. The correction maps
/// `x` (the scale the model was trained on) onto `y`.
pub fn read_pairs(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let ctx = || format!("reading paired energies {}", path.display());
    let mut reader = csv::Reader::from_path(path).with_context(ctx)?;
    let header = reader.headers().with_context(ctx)?.iter().collect::<Vec<_>>().join(",");
    if header != PAIRED_HEADER {
        return Err(DataError(format!(
            "{}: unexpected header {header:?}, expected {PAIRED_HEADER:?}",
            path.display()
        ))
        .into());
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (row, record) in reader.records().enumerate() {
        let record = record.with_context(ctx)?;
        for (col, out) in [(1, &mut xs), (2, &mut ys)] {
            let v: f64 = record[col].parse().map_err(|_| {
                DataError(format!("{}: row {}: {:?} is not a number", path.display(), row + 2, &record[col]))
            })?;
            out.push(v);
        }
    }
    Ok((xs, ys))
}

pub fn run(ctx: &Context, predictions: Option<&Path>, scalar: bool, affine: Option<&Path>) -> Result<()> {
    let path = predictions.map_or_else(|| ctx.out.predictions("val"), Path::to_path_buf);
    let table = read_predictions(&path)?;
    ctx.echo_config("recalibrate")?;
    let variances: Vec<f64> = table.preds.iter().map(|p| p.total_variance).collect();
    let sq_errors: Vec<f64> = table.preds.iter().zip(&table.ys).map(|(p, y)| (y - p.mean).powi(2)).collect();
    let map = if scalar {
        fit_scalar(&variances, &sq_errors, ctx.config.floor())?
    } else {
        fit_isotonic(&variances, &sq_errors, ctx.config.floor(), ctx.config.interpolation)?
    };
    for w in &map.metadata.warnings {
        eprintln!("warning: {w}");
    }
    artifacts::write(&ctx.out.calibration(), map.to_json())?;
    println!(
        "calibration on {} points: mean scale factor {:.6} (SD {:.6}), {} knots",
        map.metadata.n,
        map.metadata.mean_scale,
        map.metadata.sd_scale,
        map.knots().len()
    );

    if let Some(pairs) = affine {
        let (xs, ys) = read_pairs(pairs)?;
        let corr = fit_huber(&xs, &ys, ctx.config.huber_delta)?;
        if !corr.converged {
            eprintln!("warning: Huber fit did not converge in {} iterations", corr.iterations);
        }
        artifacts::write(&ctx.out.affine(), corr.to_json())?;
        println!(
            "affine correction on {} pairs: y = {} * x + {}",
            corr.n, corr.coefficient, corr.intercept
        );
    }
    Ok(())
}
