use anyhow::Result;
use rayon::prelude::*;

use uqmol::diffnet::{Member, Mpnn};
use uqmol::ensemble::{predict_ensemble, predictions_csv, EnsemblePrediction};
use uqmol::chemgraph::MolecularGraph;

use super::{load_members, Context, Loaded};
use crate::artifacts::{self, Manifest};

/// Molecules per prediction task. Fixed so the work split never depends on the
/// thread count.
const CHUNK: usize = 64;

pub fn predict_inputs(
    members: &[Member<Mpnn>],
    inputs: &[&MolecularGraph],
    workers: usize,
) -> Result<Vec<EnsemblePrediction>> {
    let run = |chunk: &[&MolecularGraph]| predict_ensemble(members, chunk);
    let chunks: Vec<_> = if workers <= 1 {
        inputs.chunks(CHUNK).map(run).collect()
    } else {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()?
            .install(|| inputs.par_chunks(CHUNK).map(run).collect())
    };
    let mut out = Vec::with_capacity(inputs.len());
    for c in chunks {
        out.extend(c?);
    }
    Ok(out)
}

pub fn run(ctx: &Context, split: &str) -> Result<()> {
    let data = Loaded::load(ctx)?;
    let manifest = Manifest::load(&ctx.out.manifest())?;
    let members: Vec<Member<Mpnn>> = load_members(ctx, &manifest)?.into_iter().map(|(_, _, m)| m).collect();
    let samples = data.samples(data.part(split)?)?;
    ctx.echo_config("predict")?;
    let preds = predict_inputs(&members, &samples.inputs, ctx.workers())?;
    let path = ctx.out.predictions(split);
    artifacts::write(&path, predictions_csv(&samples.ids, &samples.targets, &preds, members.len()))?;
    println!("{} predictions from {} members -> {}", preds.len(), members.len(), path.display());
    Ok(())
}
