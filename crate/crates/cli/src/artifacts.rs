//! On-disk layout of a pipeline output directory and the files only the command
//! line produces.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use uqmol::ensemble::{prediction_header, EnsemblePrediction};

pub const MANIFEST_FORMAT: &str = "uqmol-manifest";

/// Paths below the output root.
#[derive(Debug, Clone)]
pub struct OutDir {
    pub root: PathBuf,
}

impl OutDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn dataset(&self) -> PathBuf {
        self.root.join("dataset.jsonl")
    }

    pub fn split(&self) -> PathBuf {
        self.root.join("split.json")
    }

    pub fn overlap(&self) -> PathBuf {
        self.root.join("overlap.json")
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn manifest(&self) -> PathBuf {
        self.models().join("manifest.json")
    }

    pub fn predictions(&self, split: &str) -> PathBuf {
        self.root.join(format!("predictions_{split}.csv"))
    }

    pub fn calibration(&self) -> PathBuf {
        self.root.join("calibration.json")
    }

    pub fn affine(&self) -> PathBuf {
        self.root.join("affine.json")
    }

    pub fn report(&self, variant: &str) -> PathBuf {
        self.root.join("report").join(variant)
    }

    pub fn sweep(&self) -> PathBuf {
        self.root.join("sweep")
    }

    pub fn config_echo(&self, command: &str) -> PathBuf {
        self.root.join(format!("config.{command}.txt"))
    }
}

pub fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MemberStatus {
    Ok,
    Failed,
}

/// One ensemble member. File paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestMember {
    pub index: usize,
    pub seed: u64,
    pub status: MemberStatus,
    pub checkpoint: Option<String>,
    pub log: String,
    pub val_nll: Option<f64>,
    pub best_step: Option<usize>,
    pub steps_run: Option<usize>,
    pub stopped_early: Option<bool>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub target: String,
    pub seed: u64,
    pub m: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub members: Vec<ManifestMember>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let m: Manifest = serde_json::from_str(&read(path)?)
            .with_context(|| format!("parsing manifest {}", path.display()))?;
        if m.format != MANIFEST_FORMAT || m.version != uqmol::SCHEMA_VERSION {
            bail!(
                "{}: unsupported manifest {} v{} (expected {MANIFEST_FORMAT} v{})",
                path.display(),
                m.format,
                m.version,
                uqmol::SCHEMA_VERSION
            );
        }
        Ok(m)
    }

    pub fn ok_members(&self) -> impl Iterator<Item = &ManifestMember> {
        self.members.iter().filter(|m| m.status == MemberStatus::Ok)
    }
}

/// Prediction rows read back from a prediction CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable {
    pub m: usize,
    pub ids: Vec<String>,
    pub ys: Vec<f64>,
    pub preds: Vec<EnsemblePrediction>,
}

/// Parses a prediction CSV. The header must match the writer's exactly.
pub fn read_predictions(path: &Path) -> Result<PredictionTable> {
    let ctx = || format!("reading predictions {}", path.display());
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .with_context(ctx)?;
    let header: Vec<String> = reader.headers().with_context(ctx)?.iter().map(str::to_string).collect();
    let m = header.iter().filter(|h| h.starts_with("mu_")).count();
    if header != prediction_header(m) {
        return Err(DataError(format!(
            "{}: unexpected header {:?}, expected {:?}",
            path.display(),
            header.join(","),
            prediction_header(m).join(",")
        ))
        .into());
    }
    let mut table = PredictionTable {
        m,
        ids: Vec::new(),
        ys: Vec::new(),
        preds: Vec::new(),
    };
    for (row, record) in reader.records().enumerate() {
        let record = record.with_context(ctx)?;
        let num = |i: usize| -> Result<f64> {
            record[i].parse::<f64>().map_err(|_| {
                DataError(format!(
                    "{}: row {}: column {} is not a number: {:?}",
                    path.display(),
                    row + 2,
                    header[i],
                    &record[i]
                ))
                .into()
            })
        };
        table.ids.push(record[0].to_string());
        table.ys.push(num(1)?);
        let member_means = (0..m).map(|i| num(6 + i)).collect::<Result<Vec<_>>>()?;
        let member_variances = (0..m).map(|i| num(6 + m + i)).collect::<Result<Vec<_>>>()?;
        table.preds.push(EnsemblePrediction {
            mean: num(2)?,
            total_variance: num(3)?,
            aleatoric: num(4)?,
            epistemic: num(5)?,
            member_means,
            member_variances,
            m,
        });
    }
    Ok(table)
}

/// Malformed input file contents.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct DataError(pub String);

/// Invalid command-line usage or settings.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[cfg(test)]
mod tests {
    use super::*;
    use uqmol::ensemble::predictions_csv;

    #[test]
    fn prediction_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = EnsemblePrediction::from_members(vec![1.0, 1.5], vec![0.2, 0.3]).unwrap();
        let q = EnsemblePrediction::from_members(vec![-0.25, 0.125], vec![1e-3, 2e-3]).unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, predictions_csv(&["a", "b"], &[1.2, 0.0], &[p.clone(), q.clone()], 2)).unwrap();
        let t = read_predictions(&path).unwrap();
        assert_eq!(t.ids, vec!["a", "b"]);
        assert_eq!(t.preds, vec![p, q]);
    }

    #[test]
    fn header_only_and_bad_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        std::fs::write(&path, predictions_csv(&[], &[], &[], 3)).unwrap();
        let t = read_predictions(&path).unwrap();
        assert_eq!((t.m, t.preds.len()), (3, 0));
        std::fs::write(&path, "id,y,mean\n").unwrap();
        assert!(read_predictions(&path).unwrap_err().downcast_ref::<DataError>().is_some());
    }
}
