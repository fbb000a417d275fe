use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use anyhow::Result;

use uqmol::chemgraph::{
    overlap_split, parse_key_file, random_split, read_xyz_path, truncate_inchi_layers, ChemError, Dataset, Entry,
    MoleculeRecord, ReferenceEnergies,
};

use super::Context;
use crate::artifacts::{self, UsageError};
use crate::settings::SplitMode;

fn required<'a>(value: &'a Option<std::path::PathBuf>, key: &str) -> Result<&'a Path> {
    let p = value
        .as_deref()
        .ok_or_else(|| UsageError(format!("`{key}` is required for ingest")))?;
    if !p.exists() {
        return Err(UsageError(format!("`{key}`: {} does not exist", p.display())).into());
    }
    Ok(p)
}

fn entries(ctx: &Context, records: Vec<MoleculeRecord>, refs: &ReferenceEnergies) -> Result<Vec<Entry>, ChemError> {
    records
        .into_iter()
        .map(|record| {
            record.validate(&ctx.config.net.elements)?;
            let y = ctx.config.target.atomisation(&record, refs)?;
            Ok(Entry { record, y })
        })
        .collect()
}

fn structure_keys(
    records: &[Entry],
    sidecar: Option<&Path>,
    truncate: bool,
) -> Result<HashMap<String, String>> {
    let from_file: BTreeMap<String, String> = match sidecar {
        Some(p) => parse_key_file(&artifacts::read(p)?).map_err(|e| ChemError::InFile {
            file: p.display().to_string(),
            source: Box::new(e),
        })?,
        None => BTreeMap::new(),
    };
    let mut keys = HashMap::new();
    for e in records {
        let id = &e.record.id;
        if let Some(k) = from_file.get(id).or(e.record.structure_key.as_ref()) {
            let k = if truncate { truncate_inchi_layers(k) } else { k.clone() };
            keys.insert(id.clone(), k);
        }
    }
    Ok(keys)
}

pub fn run(ctx: &Context) -> Result<()> {
    let c = &ctx.config;
    let refs = ReferenceEnergies::load(required(&c.references, "data.references")?)?;
    let xyz = required(&c.xyz, "data.xyz")?;
    let a = entries(ctx, read_xyz_path(xyz)?, &refs)?;

    let (dataset, split) = match &c.split {
        SplitMode::Random { n_train, n_val } => {
            let dataset = Dataset::new(c.target, a)?;
            let split = random_split(&dataset.ids(), (*n_train, *n_val), c.seed)?;
            (dataset, split)
        }
        SplitMode::Overlap { n_val, truncate_stereo } => {
            let xyz_b = required(&c.xyz_b, "data.xyz_b")?;
            let b = entries(ctx, read_xyz_path(xyz_b)?, &refs)?;
            let keys_a = structure_keys(&a, c.keys.as_deref(), *truncate_stereo)?;
            let keys_b = structure_keys(&b, c.keys_b.as_deref(), *truncate_stereo)?;
            let ids_a: Vec<String> = a.iter().map(|e| e.record.id.clone()).collect();
            let ids_b: Vec<String> = b.iter().map(|e| e.record.id.clone()).collect();
            let overlap = overlap_split(&ids_a, &keys_a, &ids_b, &keys_b)?;
            println!(
                "overlap: exclusive_a {} shared_a {} exclusive_b {} shared_b {}",
                overlap.exclusive_a.len(),
                overlap.shared_a.len(),
                overlap.exclusive_b.len(),
                overlap.shared_b.len()
            );
            let n_val = *n_val;
            if n_val > overlap.exclusive_a.len() {
                return Err(ChemError::SplitTooLarge {
                    n_train: 0,
                    n_val,
                    available: overlap.exclusive_a.len(),
                }
                .into());
            }
            let n_train = overlap.exclusive_a.len() - n_val;
            let mut split = random_split(&overlap.exclusive_a, (n_train, n_val), c.seed)?;
            split.test_ids = overlap.exclusive_b.clone();
            artifacts::write(
                &ctx.out.overlap(),
                serde_json::to_string_pretty(&overlap)?,
            )?;
            (Dataset::new(c.target, a.into_iter().chain(b).collect())?, split)
        }
    };

    ctx.echo_config("ingest")?;
    dataset.save(&ctx.out.dataset())?;
    artifacts::write(&ctx.out.split(), serde_json::to_string_pretty(&split)?)?;
    println!("molecules {}", dataset.len());
    println!("train {}", split.train_ids.len());
    println!("val {}", split.val_ids.len());
    println!("test {}", split.test_ids.len());
    Ok(())
}
