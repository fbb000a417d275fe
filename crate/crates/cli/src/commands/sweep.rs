use anyhow::Result;

use uqmol::sweep::{ensemble_size_sweep, learning_curve, sweep_csv};

use super::{load_members, Context, Loaded};
use crate::artifacts::{self, Manifest};

#[derive(Debug, Clone, PartialEq)]
pub enum SweepMode {
    /// Best-first prefixes of the trained pool, up to the given size.
    EnsembleSize { max_size: Option<usize> },
    /// Retrains on nested fractions of the training split.
    LearningCurve { fractions: Vec<f64> },
}

pub fn run(ctx: &Context, mode: &SweepMode, split: Option<&str>) -> Result<()> {
    let data = Loaded::load(ctx)?;
    ctx.echo_config("sweep")?;
    let (name, rows) = match mode {
        SweepMode::EnsembleSize { max_size } => {
            let eval = data.samples(data.part(split.unwrap_or("val"))?)?;
            let manifest = Manifest::load(&ctx.out.manifest())?;
            let (nll, pool): (Vec<f64>, Vec<_>) =
                load_members(ctx, &manifest)?.into_iter().map(|(_, nll, m)| (nll, m)).unzip();
            let max = max_size.unwrap_or(pool.len());
            let rows = ensemble_size_sweep(&pool, &nll, &eval, max, manifest.n_train)?;
            ("ensemble_size", rows)
        }
        SweepMode::LearningCurve { fractions } => {
            let eval = data.samples(data.part(split.unwrap_or("test"))?)?;
            let train = data.samples(&data.split.train_ids)?;
            let val = data.samples(&data.split.val_ids)?;
            let c = &ctx.config;
            let rows = learning_curve(
                &ctx.model()?,
                &train,
                &val,
                &eval,
                fractions,
                c.m,
                &c.train,
                c.seed,
                ctx.workers(),
            )?;
            ("train_fraction", rows)
        }
    };
    let csv = sweep_csv(name, &rows);
    artifacts::write(&ctx.out.sweep().join(format!("{name}.csv")), &csv)?;
    print!("{csv}");
    Ok(())
}
