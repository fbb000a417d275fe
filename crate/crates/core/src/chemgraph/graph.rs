use serde::{Deserialize, Serialize};

use super::MoleculeRecord;

/// Cutoff graph of a molecule. Each directed edge `(src, dst)` carries the
/// interatomic distance in Å; edges come in mirrored pairs and there are no self-edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MolecularGraph {
    pub elements: Vec<u8>,
    pub edges: Vec<(usize, usize)>,
    pub distances: Vec<f64>,
    pub cutoff: f64,
    pub target: Option<f64>,
}

impl MolecularGraph {
    pub fn num_nodes(&self) -> usize {
        self.elements.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Relabels nodes so that old node `i` becomes node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> MolecularGraph {
        assert_eq!(perm.len(), self.num_nodes());
        let mut elements = vec![0; self.num_nodes()];
        for (i, &p) in perm.iter().enumerate() {
            elements[p] = self.elements[i];
        }
        MolecularGraph {
            elements,
            edges: self.edges.iter().map(|&(s, d)| (perm[s], perm[d])).collect(),
            distances: self.distances.clone(),
            cutoff: self.cutoff,
            target: self.target,
        }
    }

    /// Places `other` next to `self` with no edges between them.
    pub fn disjoint_union(&self, other: &MolecularGraph) -> MolecularGraph {
        let offset = self.num_nodes();
        let mut g = self.clone();
        g.elements.extend_from_slice(&other.elements);
        g.edges
            .extend(other.edges.iter().map(|&(s, d)| (s + offset, d + offset)));
        g.distances.extend_from_slice(&other.distances);
        g.target = match (self.target, other.target) {
            (Some(a), Some(b)) => Some(a + b),
            _ => None,
        };
        g
    }
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Directed edges for every ordered pair of distinct atoms within `cutoff`.
/// Atoms with no neighbour stay in the graph as isolated nodes.
pub fn build_graph(record: &MoleculeRecord, cutoff: f64) -> MolecularGraph {
    assert!(cutoff > 0.0, "cutoff must be positive");
    let n = record.len();
    let mut edges = Vec::new();
    let mut distances = Vec::new();
    for v in 0..n {
        for w in 0..n {
            if v == w {
                continue;
            }
            let d = distance(&record.positions[v], &record.positions[w]);
            if d <= cutoff {
                edges.push((v, w));
                distances.push(d);
            }
        }
    }
    MolecularGraph {
        elements: record.elements.clone(),
        edges,
        distances,
        cutoff,
        target: None,
    }
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, HashSet};

    use proptest::prelude::*;

    use super::*;

    fn mol(positions: Vec<[f64; 3]>) -> MoleculeRecord {
        MoleculeRecord {
            id: "t".into(),
            elements: vec![1; positions.len()],
            positions,
            total_energy: None,
            zpe: None,
            structure_key: None,
            properties: BTreeMap::new(),
        }
    }

    #[test]
    fn threshold_cases() {
        let near = mol(vec![[0.0; 3], [4.9, 0.0, 0.0]]);
        assert_eq!(build_graph(&near, 5.0).num_edges(), 2);
        let far = mol(vec![[0.0; 3], [5.1, 0.0, 0.0]]);
        let g = build_graph(&far, 5.0);
        assert_eq!(g.num_edges(), 0);
        assert_eq!(g.num_nodes(), 2);
    }

    #[test]
    fn collinear_chain() {
        let g = build_graph(&mol(vec![[0.0; 3], [3.0, 0.0, 0.0], [6.0, 0.0, 0.0]]), 5.0);
        let set: HashSet<_> = g.edges.iter().copied().collect();
        assert_eq!(set, HashSet::from([(0, 1), (1, 0), (1, 2), (2, 1)]));
        assert!(g.distances.iter().all(|&d| d == 3.0));
    }

    fn positions() -> impl Strategy<Value = Vec<[f64; 3]>> {
        prop::collection::vec(prop::array::uniform3(-4.0..4.0f64), 1..9)
    }

    proptest! {
        #[test]
        fn symmetric_no_self_edges_within_cutoff(ps in positions(), cutoff in 0.5..8.0f64) {
            let g = build_graph(&mol(ps), cutoff);
            let lookup: BTreeMap<_, _> = g.edges.iter().copied().zip(g.distances.iter().copied()).collect();
            for (&(s, d), &dist) in &lookup {
                prop_assert!(s != d);
                prop_assert!(dist <= cutoff);
                prop_assert_eq!(lookup.get(&(d, s)), Some(&dist));
            }
        }

        #[test]
        fn larger_cutoff_keeps_edges(ps in positions(), c1 in 0.5..6.0f64, extra in 0.0..3.0f64) {
            let m = mol(ps);
            let small: HashSet<_> = build_graph(&m, c1).edges.into_iter().collect();
            let large: HashSet<_> = build_graph(&m, c1 + extra).edges.into_iter().collect();
            prop_assert!(small.is_subset(&large));
        }
    }
}
