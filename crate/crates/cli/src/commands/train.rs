use anyhow::Result;

use uqmol::diffnet::Checkpoint;
use uqmol::seed::member_seed;
use uqmol::sweep::train_ensemble;
use uqmol::training::TrainLog;

use super::{Context, Loaded};
use crate::artifacts::{self, Manifest, ManifestMember, MemberStatus, MANIFEST_FORMAT};

pub fn run(ctx: &Context) -> Result<()> {
    let c = &ctx.config;
    let data = Loaded::load(ctx)?;
    let model = ctx.model()?;
    let train = data.samples(&data.split.train_ids)?;
    let val = data.samples(&data.split.val_ids)?;
    ctx.echo_config("train")?;

    let outcomes = train_ensemble(&model, &train, &val, &c.train, c.m, c.seed, ctx.workers());
    let dir = ctx.out.models();
    std::fs::create_dir_all(&dir)?;
    let mut members = Vec::with_capacity(c.m);
    let mut first_error = None;
    for (index, outcome) in outcomes.into_iter().enumerate() {
        let log = format!("member_{index}_log.csv");
        let seed = member_seed(c.seed, index);
        match outcome {
            Ok(o) => {
                let checkpoint = format!("member_{index}.json");
                Checkpoint::from_member(&o.member, o.counters.clone()).save(&dir.join(&checkpoint))?;
                artifacts::write(&dir.join(&log), o.log.to_csv())?;
                println!(
                    "member {index}: val NLL {:.6} at step {} of {}{}",
                    o.counters.best_val_nll,
                    o.counters.best_step,
                    o.counters.steps_run,
                    if o.counters.stopped_early { " (early stop)" } else { "" }
                );
                members.push(ManifestMember {
                    index,
                    seed,
                    status: MemberStatus::Ok,
                    checkpoint: Some(checkpoint),
                    log,
                    val_nll: Some(o.counters.best_val_nll),
                    best_step: Some(o.counters.best_step),
                    steps_run: Some(o.counters.steps_run),
                    stopped_early: Some(o.counters.stopped_early),
                    error: None,
                });
            }
            Err(e) => {
                eprintln!("member {index}: failed: {e}");
                artifacts::write(&dir.join(&log), format!("{}\n", TrainLog::CSV_HEADER))?;
                members.push(ManifestMember {
                    index,
                    seed,
                    status: MemberStatus::Failed,
                    checkpoint: None,
                    log,
                    val_nll: None,
                    best_step: None,
                    steps_run: None,
                    stopped_early: None,
                    error: Some(e.to_string()),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: uqmol::SCHEMA_VERSION,
        kind: "mpnn".into(),
        target: c.target.to_string(),
        seed: c.seed,
        m: c.m,
        n_train: train.len(),
        n_val: val.len(),
        members,
    };
    artifacts::write(&ctx.out.manifest(), serde_json::to_string_pretty(&manifest)?)?;
    match first_error {
        Some(e) => Err(anyhow::Error::new(e).context("one or more ensemble members failed to train")),
        None => Ok(()),
    }
}
