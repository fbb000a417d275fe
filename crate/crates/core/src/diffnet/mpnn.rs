//! Desk-scale message passing network for molecular graphs.
//!
//! Atoms are embedded by atomic number. Each of the `T` interaction steps builds a
//! continuous filter from the Gaussian-expanded edge distance (two dense layers,
//! damped by a cosine envelope that vanishes at the cutoff), multiplies it with
//! the sender embedding, sums messages at the receiver and applies a residual
//! two-layer node update. The readout is a per-atom dense head summed over atoms:
//! the mean carries a per-atom bias (size-extensive), the variance pre-activation a
//! single molecule-level bias.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::{Layout, ParamVector};
use super::tape::{Tape, Var};
use super::{fan_in_bound, DiffError, HeadOutputs, ProbModel, UNIT_SOFTPLUS_BIAS};
use crate::chemgraph::{MolecularGraph, DEFAULT_ELEMENTS};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub embedding_dim: usize,
    pub interaction_steps: usize,
    pub rbf_count: usize,
    /// Å.
    pub cutoff: f64,
    pub min_variance: f64,
    /// Hidden widths of the per-atom readout.
    pub hidden_dims: Vec<usize>,
    pub elements: Vec<u8>,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            embedding_dim: 64,
            interaction_steps: 3,
            rbf_count: 32,
            cutoff: 5.0,
            min_variance: 1e-6,
            hidden_dims: vec![64],
            elements: DEFAULT_ELEMENTS.to_vec(),
            seed: 0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<(), DiffError> {
        let bad = |m: &str| Err(DiffError::InvalidConfig(m.to_string()));
        if self.embedding_dim == 0 {
            return bad("embedding_dim must be at least 1");
        }
        if self.interaction_steps == 0 {
            return bad("interaction_steps must be at least 1");
        }
        if self.rbf_count == 0 {
            return bad("rbf_count must be at least 1");
        }
        if !(self.cutoff > 0.0) {
            return bad("cutoff must be positive");
        }
        if !(self.min_variance > 0.0) {
            return bad("min_variance must be positive");
        }
        if self.hidden_dims.contains(&0) {
            return bad("hidden_dims entries must be positive");
        }
        if self.elements.is_empty() {
            return bad("element set is empty");
        }
        Ok(())
    }

    fn rbf_centers(&self) -> (Vec<f64>, f64) {
        if self.rbf_count == 1 {
            return (vec![0.0], self.cutoff);
        }
        let spacing = self.cutoff / (self.rbf_count - 1) as f64;
        ((0..self.rbf_count).map(|k| k as f64 * spacing).collect(), spacing)
    }
}

/// Gaussian radial basis expansion with centres evenly spaced on `[0, cutoff]` and
/// width equal to the centre spacing.
pub fn expand_rbf(distance: f64, config: &NetConfig) -> Vec<f64> {
    let (centers, width) = config.rbf_centers();
    let denom = 2.0 * width * width;
    centers
        .iter()
        .map(|c| (-(distance - c).powi(2) / denom).exp())
        .collect()
}

fn cosine_envelope(distance: f64, cutoff: f64) -> f64 {
    if distance >= cutoff {
        0.0
    } else {
        0.5 * ((std::f64::consts::PI * distance / cutoff).cos() + 1.0)
    }
}

/// Several graphs concatenated into one disconnected graph.
#[derive(Debug, Clone)]
pub struct GraphBatch {
    pub species: Vec<usize>,
    pub node_graph: Vec<usize>,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub distances: Vec<f64>,
    pub num_graphs: usize,
}

impl GraphBatch {
    pub fn new(graphs: &[&MolecularGraph], elements: &[u8]) -> Result<Self, DiffError> {
        let mut b = GraphBatch {
            species: Vec::new(),
            node_graph: Vec::new(),
            src: Vec::new(),
            dst: Vec::new(),
            distances: Vec::new(),
            num_graphs: graphs.len(),
        };
        for (gi, g) in graphs.iter().enumerate() {
            let offset = b.species.len();
            for &z in &g.elements {
                let s = elements
                    .iter()
                    .position(|&e| e == z)
                    .ok_or(DiffError::UnsupportedElement(z))?;
                b.species.push(s);
                b.node_graph.push(gi);
            }
            for (&(s, d), &dist) in g.edges.iter().zip(&g.distances) {
                b.src.push(s + offset);
                b.dst.push(d + offset);
                b.distances.push(dist);
            }
        }
        Ok(b)
    }

    pub fn num_nodes(&self) -> usize {
        self.species.len()
    }
}

struct Interaction {
    filter1: (usize, usize),
    filter2: (usize, usize),
    update1: (usize, usize),
    update2: (usize, usize),
}

struct Indices {
    embedding: usize,
    interactions: Vec<Interaction>,
    readout: Vec<(usize, usize)>,
    mean: (usize, usize),
    var: (usize, usize),
}

/// Message passing regressor over [`MolecularGraph`]s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mpnn {
    pub config: NetConfig,
}

impl Mpnn {
    pub fn new(config: NetConfig) -> Result<Self, DiffError> {
        config.validate()?;
        Ok(Self { config })
    }

    fn build_layout(&self) -> (Layout, Indices) {
        let c = &self.config;
        let d = c.embedding_dim;
        let mut l = Layout::default();
        let dense = |l: &mut Layout, name: &str, fan_in: usize, fan_out: usize| {
            (
                l.push(format!("{name}.w"), fan_in, fan_out),
                l.push(format!("{name}.b"), 1, fan_out),
            )
        };
        let embedding = l.push("embedding", c.elements.len(), d);
        let interactions = (0..c.interaction_steps)
            .map(|t| Interaction {
                filter1: dense(&mut l, &format!("interaction.{t}.filter1"), c.rbf_count, d),
                filter2: dense(&mut l, &format!("interaction.{t}.filter2"), d, d),
                update1: dense(&mut l, &format!("interaction.{t}.update1"), d, d),
                update2: dense(&mut l, &format!("interaction.{t}.update2"), d, d),
            })
            .collect();
        let mut width = d;
        let mut readout = Vec::new();
        for (i, &h) in c.hidden_dims.iter().enumerate() {
            readout.push(dense(&mut l, &format!("readout.{i}"), width, h));
            width = h;
        }
        let mean = dense(&mut l, "head.mean", width, 1);
        let var = dense(&mut l, "head.var", width, 1);
        (
            l,
            Indices {
                embedding,
                interactions,
                readout,
                mean,
                var,
            },
        )
    }
}

impl ProbModel for Mpnn {
    type Input = MolecularGraph;

    const KIND: &'static str = "mpnn";

    fn layout(&self) -> Layout {
        self.build_layout().0
    }

    fn init_params(&self, seed: u64) -> ParamVector {
        let (layout, idx) = self.build_layout();
        let mut rng = seed::rng(seed::substream(seed, "mpnn-init"));
        let mut p = ParamVector::zeros(layout);
        // Weights in layout order; biases stay zero except the variance head.
        for i in 0..p.layout.tensors.len() {
            let spec = &p.layout.tensors[i];
            if spec.name.ends_with(".w") {
                let bound = fan_in_bound(spec.rows);
                p.fill_uniform(i, bound, &mut rng);
            } else if i == idx.embedding {
                p.fill_uniform(i, 3f64.sqrt(), &mut rng);
            }
        }
        for v in p.tensor_mut(idx.var.0).iter_mut() {
            *v *= 0.1;
        }
        p.tensor_mut(idx.var.1).fill(UNIT_SOFTPLUS_BIAS);
        p
    }

    fn min_variance(&self) -> f64 {
        self.config.min_variance
    }

    fn extent(&self, input: &MolecularGraph) -> f64 {
        input.num_nodes() as f64
    }

    fn record(
        &self,
        tape: &mut Tape,
        params: &[Var],
        batch: &[&MolecularGraph],
    ) -> Result<HeadOutputs, DiffError> {
        let (_, idx) = self.build_layout();
        let c = &self.config;
        let gb = GraphBatch::new(batch, &c.elements)?;
        let n = gb.num_nodes();

        let e = gb.distances.len();
        let mut rbf = Array2::zeros((e, c.rbf_count));
        let mut env = Array2::zeros((e, 1));
        for (k, &dist) in gb.distances.iter().enumerate() {
            for (j, v) in expand_rbf(dist, c).into_iter().enumerate() {
                rbf[[k, j]] = v;
            }
            env[[k, 0]] = cosine_envelope(dist, c.cutoff);
        }
        let rbf = tape.constant(rbf);
        let env = tape.constant(env);

        let dense = |tape: &mut Tape, x: Var, (w, b): (usize, usize)| {
            let h = tape.matmul(x, params[w]);
            tape.add_bias(h, params[b])
        };

        let mut h = tape.gather_rows(params[idx.embedding], &gb.species);
        for (t, block) in idx.interactions.iter().enumerate() {
            let f = dense(tape, rbf, block.filter1);
            let f = tape.shifted_softplus(f);
            let f = dense(tape, f, block.filter2);
            let f = tape.scale_rows(f, env);
            let senders = tape.gather_rows(h, &gb.src);
            let msg = tape.mul(senders, f);
            let agg = tape.scatter_add_rows(msg, &gb.dst, n);
            let u = dense(tape, agg, block.update1);
            let u = tape.shifted_softplus(u);
            let u = dense(tape, u, block.update2);
            h = tape.add(h, u);
            tape.ensure_finite(h, &format!("interaction.{t}"))?;
        }

        let mut o = h;
        for (i, &layer) in idx.readout.iter().enumerate() {
            let z = dense(tape, o, layer);
            o = tape.shifted_softplus(z);
            tape.ensure_finite(o, &format!("readout.{i}"))?;
        }
        let atom_mean = dense(tape, o, idx.mean);
        let mean = tape.scatter_add_rows(atom_mean, &gb.node_graph, gb.num_graphs);
        let atom_var = tape.matmul(o, params[idx.var.0]);
        let var_sum = tape.scatter_add_rows(atom_var, &gb.node_graph, gb.num_graphs);
        let var_pre = tape.add_bias(var_sum, params[idx.var.1]);
        tape.ensure_finite(mean, "head.mean")?;
        tape.ensure_finite(var_pre, "head.var")?;
        Ok(HeadOutputs { mean, var_pre })
    }
}
