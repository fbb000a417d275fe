//! Fully connected two-headed regressor over fixed-length feature vectors.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::{Layout, ParamVector};
use super::tape::{Tape, Var};
use super::{fan_in_bound, DiffError, HeadOutputs, ProbModel, UNIT_SOFTPLUS_BIAS};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Features(pub Vec<f64>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub min_variance: f64,
}

impl Default for DenseConfig {
    fn default() -> Self {
        Self {
            input_dim: 1,
            hidden_dims: vec![32, 32],
            min_variance: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet {
    pub config: DenseConfig,
}

impl DenseNet {
    pub fn new(config: DenseConfig) -> Result<Self, DiffError> {
        if config.input_dim == 0 || config.hidden_dims.contains(&0) {
            return Err(DiffError::InvalidConfig("layer widths must be positive".into()));
        }
        if !(config.min_variance > 0.0) {
            return Err(DiffError::InvalidConfig("min_variance must be positive".into()));
        }
        Ok(Self { config })
    }

    /// `(weight, bias)` tensor indices for every layer, heads last.
    fn layers(&self) -> (Layout, Vec<(usize, usize)>) {
        let mut l = Layout::default();
        let mut out = Vec::new();
        let mut width = self.config.input_dim;
        for (i, &h) in self.config.hidden_dims.iter().enumerate() {
            out.push((
                l.push(format!("dense.{i}.w"), width, h),
                l.push(format!("dense.{i}.b"), 1, h),
            ));
            width = h;
        }
        for head in ["mean", "var"] {
            out.push((
                l.push(format!("head.{head}.w"), width, 1),
                l.push(format!("head.{head}.b"), 1, 1),
            ));
        }
        (l, out)
    }
}

impl ProbModel for DenseNet {
    type Input = Features;

    const KIND: &'static str = "dense";

    fn layout(&self) -> Layout {
        self.layers().0
    }

    fn init_params(&self, seed: u64) -> ParamVector {
        let (layout, layers) = self.layers();
        let mut rng = seed::rng(seed::substream(seed, "dense-init"));
        let mut p = ParamVector::zeros(layout);
        for &(w, _) in &layers {
            let bound = fan_in_bound(p.layout.tensors[w].rows);
            p.fill_uniform(w, bound, &mut rng);
        }
        let (var_w, var_b) = layers[layers.len() - 1];
        for v in p.tensor_mut(var_w).iter_mut() {
            *v *= 0.1;
        }
        p.tensor_mut(var_b).fill(UNIT_SOFTPLUS_BIAS);
        p
    }

    fn min_variance(&self) -> f64 {
        self.config.min_variance
    }

    fn record(
        &self,
        tape: &mut Tape,
        params: &[Var],
        batch: &[&Features],
    ) -> Result<HeadOutputs, DiffError> {
        let d = self.config.input_dim;
        let mut x = Array2::zeros((batch.len(), d));
        for (i, f) in batch.iter().enumerate() {
            if f.0.len() != d {
                return Err(DiffError::InputShape {
                    expected: d,
                    got: f.0.len(),
                });
            }
            for (j, v) in f.0.iter().enumerate() {
                x[[i, j]] = *v;
            }
        }
        let (_, layers) = self.layers();
        let mut h = tape.constant(x);
        let n_hidden = layers.len() - 2;
        for (i, &(w, b)) in layers[..n_hidden].iter().enumerate() {
            let z = tape.matmul(h, params[w]);
            let z = tape.add_bias(z, params[b]);
            h = tape.shifted_softplus(z);
            tape.ensure_finite(h, &format!("dense.{i}"))?;
        }
        let head = |tape: &mut Tape, (w, b): (usize, usize)| {
            let z = tape.matmul(h, params[w]);
            tape.add_bias(z, params[b])
        };
        let mean = head(tape, layers[n_hidden]);
        let var_pre = head(tape, layers[n_hidden + 1]);
        tape.ensure_finite(mean, "head.mean")?;
        tape.ensure_finite(var_pre, "head.var")?;
        Ok(HeadOutputs { mean, var_pre })
    }
}
