//! Molecular structures, atomisation-energy targets, cutoff graphs and dataset splits.

mod dataset;
mod elements;
mod energy;
mod graph;
mod split;
mod xyz;

use thiserror::Error;

use crate::error::ErrorClass;

pub use dataset::{read_xyz_path, Dataset, DatasetHeader, Entry};
pub use elements::{atomic_number, symbol, DEFAULT_ELEMENTS};
pub use energy::{atomisation_energy, ReferenceEnergies, Target};
pub use graph::{build_graph, MolecularGraph};
pub use split::{
    overlap_split, parse_key_file, random_split, truncate_inchi_layers, OverlapSplit, SplitSpec,
};
pub use xyz::{parse_xyz, parse_xyz_many, MoleculeRecord};

#[derive(Debug, Error)]
pub enum ChemError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{file}: {source}")]
    InFile {
        file: String,
        #[source]
        source: Box<ChemError>,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("molecule {id}: {message}")]
    InvalidRecord { id: String, message: String },
    #[error("no reference energy for element {element} (target {target})")]
    MissingReference { element: String, target: String },
    #[error("molecule {id}: missing field `{field}`")]
    MissingField { id: String, field: &'static str },
    #[error("split sizes {n_train}+{n_val} exceed dataset size {available}")]
    SplitTooLarge {
        n_train: usize,
        n_val: usize,
        available: usize,
    },
    #[error("missing structure key for {} id(s): {}", .0.len(), .0.join(", "))]
    MissingKeys(Vec<String>),
    #[error("duplicate molecule id `{0}`")]
    DuplicateId(String),
    #[error("dataset cache: {0}")]
    Cache(String),
}

impl ChemError {
    pub fn class(&self) -> ErrorClass {
        match self {
            ChemError::MissingReference { .. } | ChemError::SplitTooLarge { .. } => {
                ErrorClass::Config
            }
            ChemError::InFile { source, .. } => source.class(),
            _ => ErrorClass::Data,
        }
    }

    pub(crate) fn in_file(self, file: impl Into<String>) -> Self {
        ChemError::InFile {
            file: file.into(),
            source: Box::new(self),
        }
    }
}
