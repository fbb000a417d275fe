pub mod evaluate;
pub mod ingest;
pub mod predict;
pub mod recalibrate;
pub mod sweep;
pub mod train;

use std::collections::HashMap;

use anyhow::{Context as _, Result};

use uqmol::chemgraph::{build_graph, Dataset, MolecularGraph, SplitSpec};
use uqmol::config::KeyValues;
use uqmol::diffnet::{Checkpoint, Member, Mpnn};
use uqmol::training::Samples;

use crate::artifacts::{self, Manifest, OutDir, UsageError};
use crate::settings::PipelineConfig;

/// Everything a command needs: resolved settings and the output root.
#[derive(Debug, Clone)]
pub struct Context {
    pub config: PipelineConfig,
    pub out: OutDir,
    pub strict_deterministic: bool,
}

impl Context {
    pub fn new(config: PipelineConfig, out: OutDir, strict_deterministic: bool) -> Self {
        Self {
            config,
            out,
            strict_deterministic,
        }
    }

    pub fn workers(&self) -> usize {
        if self.strict_deterministic {
            1
        } else {
            self.config.workers
        }
    }

    /// Writes the effective configuration next to the command's outputs.
    pub fn echo_config(&self, command: &str) -> Result<()> {
        let mut kv: KeyValues = self.config.to_kv();
        kv.insert("strict_deterministic", self.strict_deterministic);
        artifacts::write(&self.out.config_echo(command), kv.to_string())
    }

    pub fn model(&self) -> Result<Mpnn> {
        Ok(Mpnn::new(self.config.net.clone())?)
    }
}

/// Cached dataset with the graphs of every molecule built at the configured cutoff.
pub struct Loaded {
    pub dataset: Dataset,
    pub split: SplitSpec,
    graphs: Vec<MolecularGraph>,
    index: HashMap<String, usize>,
}

impl Loaded {
    pub fn load(ctx: &Context) -> Result<Self> {
        let path = ctx.out.dataset();
        if !path.exists() {
            return Err(UsageError(format!("{} not found; run `uqmol ingest` first", path.display())).into());
        }
        let dataset = Dataset::load(&path)?;
        let split: SplitSpec = serde_json::from_str(&artifacts::read(&ctx.out.split())?)
            .with_context(|| format!("parsing {}", ctx.out.split().display()))?;
        if split.version != uqmol::SCHEMA_VERSION {
            return Err(artifacts::DataError(format!(
                "{}: split version {} (expected {})",
                ctx.out.split().display(),
                split.version,
                uqmol::SCHEMA_VERSION
            ))
            .into());
        }
        let cutoff = ctx.config.net.cutoff;
        let graphs = dataset.entries().iter().map(|e| build_graph(&e.record, cutoff)).collect();
        let index = dataset.ids().into_iter().enumerate().map(|(i, id)| (id, i)).collect();
        Ok(Self {
            dataset,
            split,
            graphs,
            index,
        })
    }

    pub fn part(&self, name: &str) -> Result<&[String]> {
        self.split
            .part(name)
            .ok_or_else(|| UsageError(format!("unknown split {name:?}; expected train, val or test")).into())
    }

    pub fn samples<'a>(&'a self, ids: &'a [String]) -> Result<Samples<'a, MolecularGraph>> {
        let mut s = Samples::new(Vec::new(), Vec::new(), Vec::new());
        for id in ids {
            let &i = self
                .index
                .get(id)
                .ok_or_else(|| artifacts::DataError(format!("split refers to unknown molecule `{id}`")))?;
            s.ids.push(id.as_str());
            s.inputs.push(&self.graphs[i]);
            s.targets.push(self.dataset.entries()[i].y);
        }
        Ok(s)
    }
}

/// Successful members of the manifest, each checked against the configured model.
pub fn load_members(ctx: &Context, manifest: &Manifest) -> Result<Vec<(usize, f64, Member<Mpnn>)>> {
    let model = ctx.model()?;
    let dir = ctx.out.models();
    let mut members = Vec::new();
    for m in manifest.ok_members() {
        let file = m
            .checkpoint
            .as_ref()
            .ok_or_else(|| artifacts::DataError(format!("manifest member {} has no checkpoint", m.index)))?;
        let path = dir.join(file);
        let ckpt = Checkpoint::<Mpnn>::load(&path)?;
        ckpt.ensure_model(&model)
            .with_context(|| format!("checkpoint {}", path.display()))?;
        let member = ckpt
            .into_member()
            .with_context(|| format!("checkpoint {}", path.display()))?;
        members.push((m.index, m.val_nll.unwrap_or(f64::INFINITY), member));
    }
    if members.is_empty() {
        return Err(artifacts::DataError("manifest has no successfully trained members".into()).into());
    }
    if members.len() < manifest.members.len() {
        eprintln!(
            "warning: using {} of {} members; the others failed to train",
            members.len(),
            manifest.members.len()
        );
    }
    Ok(members)
}
