use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{atomic_number, symbol, ChemError, MoleculeRecord};
use crate::config::{ConfigError, KeyValues};

/// Energy property to learn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Target {
    /// Total energy including the vibrational zero point energy.
    U0,
    /// Total energy without ZPE, `U0 - ZPE` when not given directly.
    E,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Target::U0 => "U0",
            Target::E => "E",
        })
    }
}

impl FromStr for Target {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "U0" | "u0" => Ok(Target::U0),
            "E" | "e" => Ok(Target::E),
            _ => Err(ConfigError::Invalid(format!("unknown target {s:?}, expected U0 or E"))),
        }
    }
}

impl Target {
    /// Atomisation energy of `record` for this target.
    pub fn atomisation(
        self,
        record: &MoleculeRecord,
        refs: &ReferenceEnergies,
    ) -> Result<f64, ChemError> {
        let table = refs.for_target(self);
        match self {
            Target::U0 => {
                let total = record.properties.get("U0").copied().or(record.total_energy);
                let stripped = MoleculeRecord {
                    total_energy: total,
                    ..record.clone()
                };
                atomisation_energy(&stripped, &table, false, self)
            }
            Target::E => {
                let direct = ["E", "energy"]
                    .iter()
                    .find_map(|k| record.properties.get(*k).copied());
                match direct {
                    Some(e) => {
                        let r = MoleculeRecord {
                            total_energy: Some(e),
                            ..record.clone()
                        };
                        atomisation_energy(&r, &table, false, self)
                    }
                    None => atomisation_energy(record, &table, true, self),
                }
            }
        }
    }
}

/// Total energy (optionally minus ZPE) minus the sum of per-atom reference energies.
pub fn atomisation_energy(
    record: &MoleculeRecord,
    refs: &BTreeMap<u8, f64>,
    subtract_zpe: bool,
    target: Target,
) -> Result<f64, ChemError> {
    let missing = |field| ChemError::MissingField {
        id: record.id.clone(),
        field,
    };
    let mut energy = record.total_energy.ok_or_else(|| missing("total_energy"))?;
    if subtract_zpe {
        energy -= record.zpe.ok_or_else(|| missing("zpe"))?;
    }
    for z in &record.elements {
        let r = refs.get(z).ok_or_else(|| ChemError::MissingReference {
            element: symbol(*z).map_or_else(|| z.to_string(), str::to_string),
            target: target.to_string(),
        })?;
        energy -= r;
    }
    Ok(energy)
}

/// Isolated-atom reference energies, optionally per target.
///
/// Text form: `U0.H = -13.6` sets a target-specific value, a bare `H = -13.6`
/// applies to every target that has no specific entry.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEnergies {
    pub shared: BTreeMap<u8, f64>,
    pub per_target: BTreeMap<String, BTreeMap<u8, f64>>,
}

impl ReferenceEnergies {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let kv = KeyValues::parse(text)?;
        let mut refs = Self::default();
        for key in kv.keys() {
            let value: f64 = kv.require(key)?;
            let (target, sym) = match key.split_once('.') {
                Some((t, s)) => (Some(t.parse::<Target>()?), s),
                None => (None, key),
            };
            let z = atomic_number(sym)
                .ok_or_else(|| ConfigError::Invalid(format!("unknown element {sym:?} in `{key}`")))?;
            match target {
                Some(t) => {
                    refs.per_target.entry(t.to_string()).or_default().insert(z, value);
                }
                None => {
                    refs.shared.insert(z, value);
                }
            }
        }
        Ok(refs)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn for_target(&self, target: Target) -> BTreeMap<u8, f64> {
        let mut table = self.shared.clone();
        if let Some(specific) = self.per_target.get(&target.to_string()) {
            table.extend(specific);
        }
        table
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(elements: Vec<u8>, total: Option<f64>, zpe: Option<f64>) -> MoleculeRecord {
        let n = elements.len();
        MoleculeRecord {
            id: "m".into(),
            elements,
            positions: vec![[0.0; 3]; n],
            total_energy: total,
            zpe,
            structure_key: None,
            properties: BTreeMap::new(),
        }
    }

    #[test]
    fn methane() {
        let refs = BTreeMap::from([(6, -38.0), (1, -0.5)]);
        let ch4 = record(vec![6, 1, 1, 1, 1], Some(-40.0), None);
        assert_eq!(atomisation_energy(&ch4, &refs, false, Target::U0).unwrap(), 0.0);
    }

    #[test]
    fn single_atom_identity() {
        let refs = BTreeMap::from([(1, -13.6)]);
        let h = record(vec![1], Some(-13.6), None);
        assert_eq!(atomisation_energy(&h, &refs, false, Target::U0).unwrap(), 0.0);
    }

    #[test]
    fn zpe_subtraction() {
        let refs = BTreeMap::from([(6, -9.0)]);
        let c = record(vec![6], Some(-10.0), Some(0.5));
        assert_eq!(atomisation_energy(&c, &refs, true, Target::E).unwrap(), -1.5);
    }

    #[test]
    fn missing_reference_is_config_error() {
        let refs = BTreeMap::from([(1, -0.5)]);
        let e = atomisation_energy(&record(vec![7], Some(1.0), None), &refs, false, Target::U0)
            .unwrap_err();
        assert!(matches!(e, ChemError::MissingReference { ref element, .. } if element == "N"));
        assert_eq!(e.class(), crate::error::ErrorClass::Config);
    }

    #[test]
    fn reference_table_per_target() {
        let refs = ReferenceEnergies::parse("H = -1.0\nC = -10.0\nE.H = -0.9\n").unwrap();
        assert_eq!(refs.for_target(Target::U0)[&1], -1.0);
        assert_eq!(refs.for_target(Target::E)[&1], -0.9);
        assert_eq!(refs.for_target(Target::E)[&6], -10.0);
        assert!(ReferenceEnergies::parse("Zz = 1").is_err());
    }

    #[test]
    fn target_selection() {
        let refs = ReferenceEnergies::parse("C = -9.0").unwrap();
        let mut r = record(vec![6], Some(-10.0), Some(0.5));
        r.properties.insert("U0".into(), -10.0);
        assert_eq!(Target::U0.atomisation(&r, &refs).unwrap(), -1.0);
        assert_eq!(Target::E.atomisation(&r, &refs).unwrap(), -1.5);
        r.properties.insert("E".into(), -9.25);
        assert_eq!(Target::E.atomisation(&r, &refs).unwrap(), -0.25);
    }
}
