use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{atomic_number, ChemError};

/// A parsed molecule with its target-relevant energies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoleculeRecord {
    pub id: String,
    pub elements: Vec<u8>,
    /// Cartesian positions in Å.
    pub positions: Vec<[f64; 3]>,
    /// Total energy in eV (`U0` when present, otherwise `E`/`energy`).
    pub total_energy: Option<f64>,
    pub zpe: Option<f64>,
    pub structure_key: Option<String>,
    /// Every numeric `key=value` field from the properties line.
    #[serde(default)]
    pub properties: BTreeMap<String, f64>,
}

impl MoleculeRecord {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Checks the structural invariants and that every element is in `supported`.
    pub fn validate(&self, supported: &[u8]) -> Result<(), ChemError> {
        let invalid = |message: String| ChemError::InvalidRecord {
            id: self.id.clone(),
            message,
        };
        if self.elements.is_empty() {
            return Err(invalid("no atoms".into()));
        }
        if self.elements.len() != self.positions.len() {
            return Err(invalid(format!(
                "{} elements but {} positions",
                self.elements.len(),
                self.positions.len()
            )));
        }
        if let Some(z) = self.elements.iter().find(|z| !supported.contains(z)) {
            return Err(invalid(format!("unsupported element Z={z}")));
        }
        if self.positions.iter().flatten().any(|c| !c.is_finite()) {
            return Err(invalid("non-finite coordinate".into()));
        }
        Ok(())
    }
}

fn parse_number(token: &str) -> Option<f64> {
    // Mathematica-style exponents appear in some QM9 distributions.
    let token = token.replace("*^", "e");
    token.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_properties(line: &str, record: &mut MoleculeRecord) {
    for token in line.split_whitespace() {
        let Some((key, value)) = token.split_once('=') else {
            continue;
        };
        let value = value.trim_matches('"');
        match key {
            "id" | "name" => record.id = value.to_string(),
            "key" | "inchi_key" => record.structure_key = Some(value.to_string()),
            _ => {
                if let Some(v) = parse_number(value) {
                    record.properties.insert(key.to_string(), v);
                }
            }
        }
    }
    let props = &record.properties;
    record.total_energy = ["U0", "E", "energy"].iter().find_map(|k| props.get(*k).copied());
    record.zpe = ["zpe", "ZPE"].iter().find_map(|k| props.get(*k).copied());
}

/// Parses one molecule block starting at `lines[0]`, which is physical line
/// `first_line` (1-based). Returns the record and the number of lines consumed.
fn parse_block(lines: &[&str], first_line: usize) -> Result<(MoleculeRecord, usize), ChemError> {
    let err = |offset: usize, message: String| ChemError::Parse {
        line: first_line + offset,
        message,
    };
    let count_line = lines
        .first()
        .ok_or_else(|| err(0, "missing atom count line".into()))?;
    let count: usize = count_line
        .trim()
        .parse()
        .map_err(|_| err(0, format!("malformed atom count {:?}", count_line.trim())))?;
    if count == 0 {
        return Err(err(0, "atom count must be at least 1".into()));
    }
    let comment = lines
        .get(1)
        .ok_or_else(|| err(1, "missing properties line".into()))?;

    let mut record = MoleculeRecord {
        id: String::new(),
        elements: Vec::with_capacity(count),
        positions: Vec::with_capacity(count),
        total_energy: None,
        zpe: None,
        structure_key: None,
        properties: BTreeMap::new(),
    };
    parse_properties(comment, &mut record);

    for atom in 0..count {
        let offset = atom + 2;
        let line = lines.get(offset).ok_or_else(|| {
            err(
                offset,
                format!("expected {count} atoms, found {atom} (atom {} missing)", atom + 1),
            )
        })?;
        let mut fields = line.split_whitespace();
        let sym = fields
            .next()
            .ok_or_else(|| err(offset, "blank line where an atom was expected".into()))?;
        let z = atomic_number(sym)
            .ok_or_else(|| err(offset, format!("unknown element symbol {sym:?}")))?;
        let mut pos = [0.0; 3];
        for (axis, slot) in pos.iter_mut().enumerate() {
            let tok = fields.next().ok_or_else(|| {
                err(offset, format!("missing coordinate {}", ["x", "y", "z"][axis]))
            })?;
            *slot = parse_number(tok)
                .ok_or_else(|| err(offset, format!("non-numeric coordinate {tok:?}")))?;
        }
        record.elements.push(z);
        record.positions.push(pos);
    }
    Ok((record, count + 2))
}

/// Parses the first molecule of an extended-XYZ text. Lines after the atom block
/// are ignored.
pub fn parse_xyz(text: &str) -> Result<MoleculeRecord, ChemError> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.iter().all(|l| l.trim().is_empty()) {
        return Err(ChemError::Parse {
            line: 1,
            message: "empty input".into(),
        });
    }
    parse_block(&lines, 1).map(|(r, _)| r)
}

/// Parses concatenated molecule blocks. Records without an `id=` field are named
/// `{default_id}_{index}` (or `default_id` when the text holds a single molecule).
pub fn parse_xyz_many(text: &str, default_id: &str) -> Result<Vec<MoleculeRecord>, ChemError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut records = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let (record, used) = parse_block(&lines[i..], i + 1)?;
        records.push(record);
        i += used;
    }
    if records.is_empty() {
        return Err(ChemError::Parse {
            line: 1,
            message: "empty input".into(),
        });
    }
    let single = records.len() == 1;
    for (k, r) in records.iter_mut().enumerate() {
        if r.id.is_empty() {
            r.id = if single {
                default_id.to_string()
            } else {
                format!("{default_id}_{k}")
            };
        }
    }
    Ok(records)
}
