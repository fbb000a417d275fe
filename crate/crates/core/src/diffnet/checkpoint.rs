use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::params::{Layout, ParamVector};
use super::{DiffError, Member, ProbModel, TargetScaler};

pub const CHECKPOINT_FORMAT: &str = "uqmol-checkpoint";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingCounters {
    pub steps_run: usize,
    pub best_step: usize,
    pub best_val_nll: f64,
    pub stopped_early: bool,
}

/// Versioned member snapshot: architecture, layout, flat parameters, target scaling
/// and training counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<M> {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub model: M,
    pub layout: Layout,
    pub params: Vec<f64>,
    pub scaler: TargetScaler,
    pub counters: TrainingCounters,
}

impl<M: ProbModel + Serialize + DeserializeOwned + Clone> Checkpoint<M> {
    pub fn from_member(member: &Member<M>, counters: TrainingCounters) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: crate::SCHEMA_VERSION,
            kind: M::KIND.into(),
            model: member.model.clone(),
            layout: member.params.layout.clone(),
            params: member.params.values.clone(),
            scaler: member.scaler,
            counters,
        }
    }

    /// Validates the header and layout and rebuilds the member.
    pub fn into_member(self) -> Result<Member<M>, DiffError> {
        let mismatch = |field: &str, message: String| DiffError::Mismatch {
            field: field.into(),
            message,
        };
        if self.format != CHECKPOINT_FORMAT {
            return Err(mismatch("format", format!("got {:?}", self.format)));
        }
        if self.version != crate::SCHEMA_VERSION {
            return Err(mismatch(
                "version",
                format!("got {}, expected {}", self.version, crate::SCHEMA_VERSION),
            ));
        }
        if self.kind != M::KIND {
            return Err(mismatch("kind", format!("got {:?}, expected {:?}", self.kind, M::KIND)));
        }
        let expected = self.model.layout();
        if expected != self.layout {
            let field = expected
                .tensors
                .iter()
                .zip(&self.layout.tensors)
                .find(|(a, b)| a != b)
                .map_or_else(|| "layout".to_string(), |(a, _)| format!("layout.{}", a.name));
            return Err(mismatch(&field, "stored layout differs from the model".into()));
        }
        if self.params.len() != expected.len() {
            return Err(mismatch(
                "params",
                format!("{} values for a layout of {}", self.params.len(), expected.len()),
            ));
        }
        let params = ParamVector {
            layout: self.layout,
            values: self.params,
        };
        if !params.is_finite() {
            return Err(DiffError::Checkpoint("non-finite parameter".into()));
        }
        Ok(Member {
            model: self.model,
            params,
            scaler: self.scaler,
        })
    }

    /// Fails with the first differing config field when `self.model` is not `expected`.
    pub fn ensure_model(&self, expected: &M) -> Result<(), DiffError> {
        let a = serde_json::to_value(&self.model).map_err(|e| DiffError::Checkpoint(e.to_string()))?;
        let b = serde_json::to_value(expected).map_err(|e| DiffError::Checkpoint(e.to_string()))?;
        if a == b {
            return Ok(());
        }
        Err(DiffError::Mismatch {
            field: first_difference(&a, &b, String::new()),
            message: "checkpoint model differs from the configured model".into(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), DiffError> {
        let text = serde_json::to_string(self).map_err(|e| DiffError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text)
            .map_err(|e| DiffError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, DiffError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| DiffError::Checkpoint(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| DiffError::Checkpoint(format!("{}: {e}", path.display())))
    }
}

fn first_difference(a: &serde_json::Value, b: &serde_json::Value, path: String) -> String {
    use serde_json::Value;
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            for (k, va) in x {
                let p = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                match y.get(k) {
                    Some(vb) if vb == va => {}
                    Some(vb) => return first_difference(va, vb, p),
                    None => return p,
                }
            }
            y.keys()
                .find(|k| !x.contains_key(*k))
                .map_or(path.clone(), |k| format!("{path}.{k}"))
        }
        _ => path,
    }
}
