use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Gradients, Tape, Var};

/// Location of one named tensor inside a flat parameter array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub tensors: Vec<TensorSpec>,
}

impl Layout {
    pub fn push(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> usize {
        let offset = self.len();
        self.tensors.push(TensorSpec {
            name: name.into(),
            rows,
            cols,
            offset,
        });
        self.tensors.len() - 1
    }

    /// Total number of scalars.
    pub fn len(&self) -> usize {
        self.tensors.last().map_or(0, |t| t.offset + t.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.tensors.iter().position(|t| t.name == name)
    }
}

/// Flat model parameters plus the layout that names their slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub layout: Layout,
    pub values: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: Layout) -> Self {
        let n = layout.len();
        Self {
            layout,
            values: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tensor(&self, i: usize) -> ArrayView2<'_, f64> {
        let t = &self.layout.tensors[i];
        ArrayView2::from_shape((t.rows, t.cols), &self.values[t.offset..t.offset + t.len()])
            .expect("layout shape")
    }

    pub fn tensor_mut(&mut self, i: usize) -> ArrayViewMut2<'_, f64> {
        let t = &self.layout.tensors[i];
        let (rows, cols, start, end) = (t.rows, t.cols, t.offset, t.offset + t.len());
        ArrayViewMut2::from_shape((rows, cols), &mut self.values[start..end])
            .expect("layout shape")
    }

    pub fn named(&self, name: &str) -> Option<ArrayView2<'_, f64>> {
        self.layout.index_of(name).map(|i| self.tensor(i))
    }

    /// Fills tensor `i` with `U(-bound, bound)` samples.
    pub fn fill_uniform<R: Rng>(&mut self, i: usize, bound: f64, rng: &mut R) {
        for v in self.tensor_mut(i).iter_mut() {
            *v = rng.random_range(-bound..=bound);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// One tape leaf per tensor, in layout order.
    pub fn leaves(&self, tape: &mut Tape) -> Vec<Var> {
        (0..self.layout.tensors.len())
            .map(|i| tape.leaf(self.tensor(i).to_owned()))
            .collect()
    }

    /// Collects per-tensor gradients back into a flat vector with the same layout.
    pub fn gradient_from(&self, grads: &Gradients, leaves: &[Var]) -> ParamVector {
        let mut out = ParamVector::zeros(self.layout.clone());
        for (i, &leaf) in leaves.iter().enumerate() {
            if let Some(g) = grads.get(leaf) {
                out.tensor_mut(i).assign(g);
            }
        }
        out
    }
}
