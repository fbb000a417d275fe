use std::collections::HashMap;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{parse_xyz_many, ChemError, MoleculeRecord, Target};

pub const DATASET_FORMAT: &str = "uqmol-dataset";

/// First line of a dataset cache.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format: String,
    pub version: u32,
    pub target: Target,
    pub count: usize,
}

/// A molecule together with its atomisation-energy target in eV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub record: MoleculeRecord,
    pub y: f64,
}

/// Immutable collection of molecules with targets, indexed by id.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub target: Target,
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
}

impl Dataset {
    pub fn new(target: Target, entries: Vec<Entry>) -> Result<Self, ChemError> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if index.insert(e.record.id.clone(), i).is_some() {
                return Err(ChemError::DuplicateId(e.record.id.clone()));
            }
        }
        Ok(Self {
            target,
            entries,
            index,
        })
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn ids(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.record.id.clone()).collect()
    }

    pub fn get(&self, id: &str) -> Option<&Entry> {
        self.index.get(id).map(|&i| &self.entries[i])
    }

    /// Entries for `ids`, in that order.
    pub fn select(&self, ids: &[String]) -> Result<Vec<&Entry>, ChemError> {
        ids.iter()
            .map(|id| {
                self.get(id).ok_or_else(|| ChemError::Cache(format!("unknown molecule id `{id}`")))
            })
            .collect()
    }

    /// Line-delimited JSON: a [`DatasetHeader`] line, then one [`Entry`] per line.
    pub fn write_jsonl<W: Write>(&self, writer: W) -> std::io::Result<()> {
        let mut w = BufWriter::new(writer);
        let header = DatasetHeader {
            format: DATASET_FORMAT.into(),
            version: crate::SCHEMA_VERSION,
            target: self.target,
            count: self.entries.len(),
        };
        serde_json::to_writer(&mut w, &header)?;
        w.write_all(b"\n")?;
        for e in &self.entries {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    pub fn read_jsonl<R: std::io::Read>(reader: R) -> Result<Self, ChemError> {
        let mut lines = BufReader::new(reader).lines();
        let io = |e: std::io::Error| ChemError::Cache(e.to_string());
        let first = lines
            .next()
            .ok_or_else(|| ChemError::Cache("empty cache".into()))?
            .map_err(io)?;
        let header: DatasetHeader = serde_json::from_str(&first)
            .map_err(|e| ChemError::Cache(format!("bad header: {e}")))?;
        if header.format != DATASET_FORMAT || header.version != crate::SCHEMA_VERSION {
            return Err(ChemError::Cache(format!(
                "unsupported cache {} v{} (expected {DATASET_FORMAT} v{})",
                header.format,
                header.version,
                crate::SCHEMA_VERSION
            )));
        }
        let mut entries = Vec::with_capacity(header.count);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(io)?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(
                serde_json::from_str(&line)
                    .map_err(|e| ChemError::Cache(format!("line {}: {e}", i + 2)))?,
            );
        }
        if entries.len() != header.count {
            return Err(ChemError::Cache(format!(
                "header announces {} entries, found {}",
                header.count,
                entries.len()
            )));
        }
        Self::new(header.target, entries)
    }

    pub fn save(&self, path: &Path) -> Result<(), ChemError> {
        let io = |source| ChemError::Io {
            path: path.display().to_string(),
            source,
        };
        let f = std::fs::File::create(path).map_err(io)?;
        self.write_jsonl(f).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, ChemError> {
        let f = std::fs::File::open(path).map_err(|source| ChemError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::read_jsonl(f).map_err(|e| e.in_file(path.display().to_string()))
    }
}

/// Reads every molecule from an `.xyz` file, or from all `.xyz` files of a
/// directory in lexicographic order.
pub fn read_xyz_path(path: &Path) -> Result<Vec<MoleculeRecord>, ChemError> {
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |source| ChemError::Io { path: p, source }
    };
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(path)
            .map_err(io(path))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "xyz"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    let mut out = Vec::new();
    for file in files {
        let text = std::fs::read_to_string(&file).map_err(io(&file))?;
        let stem = file
            .file_stem()
            .map_or_else(|| "mol".to_string(), |s| s.to_string_lossy().into_owned());
        let records =
            parse_xyz_many(&text, &stem).map_err(|e| e.in_file(file.display().to_string()))?;
        out.extend(records);
    }
    Ok(out)
}
