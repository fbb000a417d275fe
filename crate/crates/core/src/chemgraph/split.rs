use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::ChemError;
use crate::seed;

/// Disjoint train/validation/test id lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub version: u32,
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl SplitSpec {
    pub fn is_disjoint(&self) -> bool {
        let mut seen = HashSet::new();
        self.train_ids
            .iter()
            .chain(&self.val_ids)
            .chain(&self.test_ids)
            .all(|id| seen.insert(id.as_str()))
    }

    pub fn part(&self, name: &str) -> Option<&[String]> {
        match name {
            "train" => Some(&self.train_ids),
            "val" | "validation" => Some(&self.val_ids),
            "test" => Some(&self.test_ids),
            _ => None,
        }
    }
}

/// Seeded Fisher-Yates shuffle of the sorted ids, then the first `n_train` go to
/// training, the next `n_val` to validation and the remainder to test.
pub fn random_split(
    ids: &[String],
    (n_train, n_val): (usize, usize),
    seed: u64,
) -> Result<SplitSpec, ChemError> {
    if n_train + n_val > ids.len() {
        return Err(ChemError::SplitTooLarge {
            n_train,
            n_val,
            available: ids.len(),
        });
    }
    let mut sorted = ids.to_vec();
    sorted.sort();
    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
        return Err(ChemError::DuplicateId(w[0].clone()));
    }
    seed::shuffle(&mut sorted, &mut seed::rng(seed::substream(seed, "split")));
    let test_ids = sorted.split_off(n_train + n_val);
    let val_ids = sorted.split_off(n_train);
    Ok(SplitSpec {
        version: crate::SCHEMA_VERSION,
        seed,
        train_ids: sorted,
        val_ids,
        test_ids,
    })
}

/// Molecules of two datasets partitioned by whether their structure key occurs in
/// the other dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapSplit {
    pub version: u32,
    pub exclusive_a: Vec<String>,
    pub shared_a: Vec<String>,
    pub exclusive_b: Vec<String>,
    pub shared_b: Vec<String>,
}

/// Splits each dataset into ids whose key also appears in the other dataset and
/// ids whose key does not. Duplicate keys are counted per id, so `shared_a` and
/// `shared_b` may have different lengths.
pub fn overlap_split<S: std::hash::BuildHasher>(
    ids_a: &[String],
    keys_a: &HashMap<String, String, S>,
    ids_b: &[String],
    keys_b: &HashMap<String, String, S>,
) -> Result<OverlapSplit, ChemError> {
    let missing: Vec<String> = ids_a
        .iter()
        .filter(|id| !keys_a.contains_key(*id))
        .chain(ids_b.iter().filter(|id| !keys_b.contains_key(*id)))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(ChemError::MissingKeys(missing));
    }
    let set_a: HashSet<&str> = ids_a.iter().map(|id| keys_a[id].as_str()).collect();
    let set_b: HashSet<&str> = ids_b.iter().map(|id| keys_b[id].as_str()).collect();
    let partition = |ids: &[String], keys: &HashMap<String, String, S>, other: &HashSet<&str>| {
        ids.iter()
            .cloned()
            .partition::<Vec<_>, _>(|id| !other.contains(keys[id].as_str()))
    };
    let (exclusive_a, shared_a) = partition(ids_a, keys_a, &set_b);
    let (exclusive_b, shared_b) = partition(ids_b, keys_b, &set_a);
    Ok(OverlapSplit {
        version: crate::SCHEMA_VERSION,
        exclusive_a,
        shared_a,
        exclusive_b,
        shared_b,
    })
}

/// Parses an `id<TAB>key` sidecar file.
pub fn parse_key_file(text: &str) -> Result<BTreeMap<String, String>, ChemError> {
    let mut keys = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let (id, key) = line
            .split_once('\t')
            .or_else(|| line.trim().split_once(char::is_whitespace))
            .ok_or_else(|| ChemError::Parse {
                line: i + 1,
                message: "expected `id<TAB>key`".into(),
            })?;
        let (id, key) = (id.trim(), key.trim());
        if id.is_empty() || key.is_empty() {
            return Err(ChemError::Parse {
                line: i + 1,
                message: "empty id or key".into(),
            });
        }
        keys.insert(id.to_string(), key.to_string());
    }
    Ok(keys)
}

/// Drops the stereochemical `/b`, `/t`, `/m` and `/s` layers of an InChI string so
/// stereoisomers share a key.
pub fn truncate_inchi_layers(inchi: &str) -> String {
    let mut layers = inchi.split('/');
    let mut out = String::from(layers.next().unwrap_or_default());
    for layer in layers {
        if !matches!(layer.chars().next(), Some('b' | 't' | 'm' | 's')) {
            out.push('/');
            out.push_str(layer);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("mol{i:06}")).collect()
    }

    #[test]
    fn qm9_sized_split() {
        let s = random_split(&ids(133_885), (110_000, 10_000), 0).unwrap();
        assert_eq!(s.train_ids.len(), 110_000);
        assert_eq!(s.val_ids.len(), 10_000);
        assert_eq!(s.test_ids.len(), 13_885);
        assert!(s.is_disjoint());
    }

    #[test]
    fn boundary_and_errors() {
        let s = random_split(&ids(10), (10, 0), 1).unwrap();
        assert!(s.test_ids.is_empty() && s.val_ids.is_empty());
        assert!(matches!(
            random_split(&ids(10), (8, 3), 1),
            Err(ChemError::SplitTooLarge { .. })
        ));
        let dup = vec!["a".to_string(), "a".to_string()];
        assert!(matches!(random_split(&dup, (1, 0), 1), Err(ChemError::DuplicateId(_))));
    }

    #[test]
    fn deterministic_and_order_independent() {
        let mut v = ids(50);
        let a = random_split(&v, (30, 10), 42).unwrap();
        v.reverse();
        let b = random_split(&v, (30, 10), 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_split(&v, (30, 10), 43).unwrap());
    }

    fn keymap(pairs: &[(&str, &str)]) -> HashMap<String, String> {
        pairs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
    }

    fn owned(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn overlap_set_logic() {
        let ka = keymap(&[("a1", "k1"), ("a2", "k2")]);
        let kb = keymap(&[("b2", "k2"), ("b3", "k3")]);
        let o = overlap_split(&owned(&["a1", "a2"]), &ka, &owned(&["b2", "b3"]), &kb).unwrap();
        assert_eq!(o.exclusive_a, owned(&["a1"]));
        assert_eq!(o.shared_a, owned(&["a2"]));
        assert_eq!(o.exclusive_b, owned(&["b3"]));
        assert_eq!(o.shared_b, owned(&["b2"]));
    }

    #[test]
    fn overlap_duplicate_keys() {
        let ka = keymap(&[("a1", "k2"), ("a2", "k2"), ("a3", "k9")]);
        let kb = keymap(&[("b1", "k2")]);
        let o = overlap_split(&owned(&["a1", "a2", "a3"]), &ka, &owned(&["b1"]), &kb).unwrap();
        assert_eq!(o.shared_a.len(), 2);
        assert_eq!(o.shared_b.len(), 1);
    }

    #[test]
    fn overlap_disjoint_and_missing() {
        let ka = keymap(&[("a1", "k1")]);
        let kb = keymap(&[("b1", "k2")]);
        let o = overlap_split(&owned(&["a1"]), &ka, &owned(&["b1"]), &kb).unwrap();
        assert!(o.shared_a.is_empty() && o.shared_b.is_empty());
        match overlap_split(&owned(&["a1", "a9"]), &ka, &owned(&["b1", "b7"]), &kb) {
            Err(ChemError::MissingKeys(m)) => assert_eq!(m, owned(&["a9", "b7"])),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn key_file() {
        let k = parse_key_file("a\tInChI=1S/CH4/h1H4\n\nb InChI=1S/H2O/h1H2\n").unwrap();
        assert_eq!(k["a"], "InChI=1S/CH4/h1H4");
        assert_eq!(k["b"], "InChI=1S/H2O/h1H2");
        assert!(matches!(parse_key_file("lonely\n"), Err(ChemError::Parse { line: 1, .. })));
    }

    #[test]
    fn inchi_truncation() {
        let full = "InChI=1S/C4H10O/c1-3-4(2)5/h4-5H,3H2,1-2H3/t4-/m0/s1";
        assert_eq!(truncate_inchi_layers(full), "InChI=1S/C4H10O/c1-3-4(2)5/h4-5H,3H2,1-2H3");
        assert_eq!(
            truncate_inchi_layers("InChI=1S/C2H2Cl2/c3-1-2-4/h1-2H/b2-1+"),
            "InChI=1S/C2H2Cl2/c3-1-2-4/h1-2H"
        );
    }

    proptest! {
        #[test]
        fn overlap_conserves_counts(
            a in prop::collection::vec(0u8..6, 0..20),
            b in prop::collection::vec(0u8..6, 0..20),
        ) {
            let ids_a: Vec<String> = (0..a.len()).map(|i| format!("a{i}")).collect();
            let ids_b: Vec<String> = (0..b.len()).map(|i| format!("b{i}")).collect();
            let ka: HashMap<_, _> = ids_a.iter().cloned().zip(a.iter().map(|k| k.to_string())).collect();
            let kb: HashMap<_, _> = ids_b.iter().cloned().zip(b.iter().map(|k| k.to_string())).collect();
            let o = overlap_split(&ids_a, &ka, &ids_b, &kb).unwrap();
            prop_assert_eq!(o.exclusive_a.len() + o.shared_a.len(), ids_a.len());
            prop_assert_eq!(o.exclusive_b.len() + o.shared_b.len(), ids_b.len());
        }

        #[test]
        fn split_is_disjoint_partition(n in 0usize..60, tf in 0.0..1.0f64, vf in 0.0..1.0f64, seed: u64) {
            let t = (tf * n as f64) as usize;
            let v = (vf * (n - t) as f64) as usize;
            let all = ids(n);
            let s = random_split(&all, (t, v), seed).unwrap();
            prop_assert!(s.is_disjoint());
            prop_assert_eq!(s.train_ids.len() + s.val_ids.len() + s.test_ids.len(), n);
        }
    }
}
