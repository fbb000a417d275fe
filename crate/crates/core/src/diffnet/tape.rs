//! Tensor-level reverse-mode differentiation.
//!
//! Values are row-major `f64` matrices. Each operation appends a node holding its
//! forward value; [`Tape::backward`] walks the nodes in reverse and accumulates
//! vector-Jacobian products into every node that depends on a leaf.
//!
//! ```
//! use uqmol::diffnet::tape::Tape;
//!
//! let mut tape = Tape::new();
//! let x = tape.scalar_leaf(3.0);
//! let y = tape.mul(x, x);
//! let grads = tape.backward(y);
//! assert_eq!(tape.scalar(y), 9.0);
//! assert_eq!(grads.scalar(x), 6.0);
//! ```

use ndarray::{Array2, Axis, Zip};

use super::DiffError;

pub type Tensor = Array2<f64>;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Square(Var),
    Ln(Var),
    Softplus(Var),
    ShiftedSoftplus(Var),
    Scale(Var, f64),
    AddScalar(Var),
    Mean(Var),
    Sum(Var),
    Gather(Var, Vec<usize>),
    ScatterAdd(Var, Vec<usize>),
    Column(Var, usize),
    ScaleRows(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `softplus(x) - ln 2`, zero at the origin.
pub fn shifted_softplus(x: f64) -> f64 {
    softplus(x) - std::f64::consts::LN_2
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = match &op {
            Op::Leaf => true,
            Op::Constant => false,
            Op::MatMul(a, b)
            | Op::AddBias(a, b)
            | Op::Add(a, b)
            | Op::Sub(a, b)
            | Op::Mul(a, b)
            | Op::Div(a, b)
            | Op::ScaleRows(a, b) => self.needs(*a) || self.needs(*b),
            Op::Square(a)
            | Op::Ln(a)
            | Op::Softplus(a)
            | Op::ShiftedSoftplus(a)
            | Op::Scale(a, _)
            | Op::AddScalar(a)
            | Op::Mean(a)
            | Op::Sum(a)
            | Op::Gather(a, _)
            | Op::ScatterAdd(a, _)
            | Op::Column(a, _) => self.needs(*a),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let t = self.value(v);
        debug_assert_eq!(t.dim(), (1, 1));
        t[[0, 0]]
    }

    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn scalar_leaf(&mut self, value: f64) -> Var {
        self.leaf(Array2::from_elem((1, 1), value))
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant)
    }

    /// Column vector constant.
    pub fn column(&mut self, values: &[f64]) -> Var {
        let t = Array2::from_shape_vec((values.len(), 1), values.to_vec())
            .expect("column shape");
        self.constant(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).dot(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a + b` with the single row of `b` broadcast over the rows of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let b = self.value(bias);
        assert_eq!(b.nrows(), 1, "bias must be a row vector");
        let v = self.value(a) + &b.row(0);
        self.push(v, Op::AddBias(a, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) + self.value(b);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) - self.value(b);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) * self.value(b);
        self.push(v, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a) / self.value(b);
        self.push(v, Op::Div(a, b))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(|x| x * x);
        self.push(v, Op::Square(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(f64::ln);
        self.push(v, Op::Ln(a))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(softplus);
        self.push(v, Op::Softplus(a))
    }

    pub fn shifted_softplus(&mut self, a: Var) -> Var {
        let v = self.value(a).mapv(shifted_softplus);
        self.push(v, Op::ShiftedSoftplus(a))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) * c;
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a) + c;
        self.push(v, Op::AddScalar(a))
    }

    /// Mean of all entries, as a 1x1 node.
    pub fn mean(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let m = t.sum() / t.len() as f64;
        self.push(Array2::from_elem((1, 1), m), Op::Mean(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Array2::from_elem((1, 1), s), Op::Sum(a))
    }

    /// Row `i` of the output is row `index[i]` of `a`.
    pub fn gather_rows(&mut self, a: Var, index: &[usize]) -> Var {
        let v = self.value(a).select(Axis(0), index);
        self.push(v, Op::Gather(a, index.to_vec()))
    }

    /// Output has `rows` rows; row `i` of `a` is added into output row `index[i]`.
    pub fn scatter_add_rows(&mut self, a: Var, index: &[usize], rows: usize) -> Var {
        let src = self.value(a);
        assert_eq!(src.nrows(), index.len());
        let mut out = Array2::zeros((rows, src.ncols()));
        for (i, &dst) in index.iter().enumerate() {
            let mut row = out.row_mut(dst);
            row += &src.row(i);
        }
        self.push(out, Op::ScatterAdd(a, index.to_vec()))
    }

    pub fn select_column(&mut self, a: Var, col: usize) -> Var {
        let v = self.value(a).column(col).to_owned().insert_axis(Axis(1));
        self.push(v, Op::Column(a, col))
    }

    /// Multiplies row `i` of `a` by `s[i, 0]`.
    pub fn scale_rows(&mut self, a: Var, s: Var) -> Var {
        let col = self.value(s);
        assert_eq!(col.ncols(), 1);
        let v = self.value(a) * col;
        self.push(v, Op::ScaleRows(a, s))
    }

    /// Fails if `v` holds a NaN or infinity; `layer` names the offending stage.
    pub fn ensure_finite(&self, v: Var, layer: &str) -> Result<(), DiffError> {
        if self.value(v).iter().all(|x| x.is_finite()) {
            Ok(())
        } else {
            Err(DiffError::NonFinite {
                layer: layer.to_string(),
            })
        }
    }

    /// Reverse sweep from the 1x1 node `output`.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).dim(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Array2::ones((1, 1)));

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf | Op::Constant) {
                grads[idx] = Some(g);
                continue;
            }
            let mut acc = |v: Var, delta: Tensor| {
                if self.nodes[v.0].requires_grad {
                    match &mut grads[v.0] {
                        Some(existing) => *existing += &delta,
                        slot @ None => *slot = Some(delta),
                    }
                }
            };
            match &node.op {
                Op::Leaf | Op::Constant => unreachable!(),
                Op::MatMul(a, b) => {
                    acc(*a, g.dot(&self.value(*b).t()));
                    acc(*b, self.value(*a).t().dot(&g));
                }
                Op::AddBias(a, b) => {
                    acc(*b, g.sum_axis(Axis(0)).insert_axis(Axis(0)));
                    acc(*a, g);
                }
                Op::Add(a, b) => {
                    acc(*b, g.clone());
                    acc(*a, g);
                }
                Op::Sub(a, b) => {
                    acc(*b, -&g);
                    acc(*a, g);
                }
                Op::Mul(a, b) => {
                    acc(*a, &g * self.value(*b));
                    acc(*b, &g * self.value(*a));
                }
                Op::Div(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut gb = Array2::zeros(g.raw_dim());
                    Zip::from(&mut gb)
                        .and(&g)
                        .and(av)
                        .and(bv)
                        .for_each(|o, &g, &a, &b| *o = -g * a / (b * b));
                    acc(*b, gb);
                    acc(*a, g / bv);
                }
                Op::Square(a) => acc(*a, &g * &(self.value(*a) * 2.0)),
                Op::Ln(a) => acc(*a, g / self.value(*a)),
                Op::Softplus(a) | Op::ShiftedSoftplus(a) => {
                    acc(*a, g * &self.value(*a).mapv(sigmoid));
                }
                Op::Scale(a, c) => acc(*a, g * *c),
                Op::AddScalar(a) => acc(*a, g),
                Op::Mean(a) => {
                    let shape = self.value(*a).raw_dim();
                    let n = self.value(*a).len() as f64;
                    acc(*a, Array2::from_elem(shape, g[[0, 0]] / n));
                }
                Op::Sum(a) => {
                    let shape = self.value(*a).raw_dim();
                    acc(*a, Array2::from_elem(shape, g[[0, 0]]));
                }
                Op::Gather(a, index) => {
                    let src = self.value(*a);
                    let mut ga = Array2::zeros(src.raw_dim());
                    for (i, &j) in index.iter().enumerate() {
                        let mut row = ga.row_mut(j);
                        row += &g.row(i);
                    }
                    acc(*a, ga);
                }
                Op::ScatterAdd(a, index) => acc(*a, g.select(Axis(0), index)),
                Op::Column(a, col) => {
                    let mut ga = Array2::zeros(self.value(*a).raw_dim());
                    ga.column_mut(*col).assign(&g.column(0));
                    acc(*a, ga);
                }
                Op::ScaleRows(a, s) => {
                    let (av, sv) = (self.value(*a), self.value(*s));
                    let gs = (&g * av).sum_axis(Axis(1)).insert_axis(Axis(1));
                    acc(*s, gs);
                    acc(*a, g * sv);
                }
            }
        }
        Gradients { grads }
    }
}

/// Accumulated gradients from one reverse sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient with respect to `v`, `None` when the output does not depend on it.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.get(v).map_or(0.0, |t| t[[0, 0]])
    }
}

#[cfg(test)]
mod tests {
    use ndarray::array;

    use super::*;

    /// Central differences of `f` with respect to every entry of `x`.
    fn numeric_grad(x: &Tensor, f: impl Fn(&Tensor) -> f64) -> Tensor {
        let eps = 1e-6;
        let mut g = Array2::zeros(x.raw_dim());
        for idx in 0..x.len() {
            let (r, c) = (idx / x.ncols(), idx % x.ncols());
            let mut p = x.clone();
            p[[r, c]] += eps;
            let mut m = x.clone();
            m[[r, c]] -= eps;
            g[[r, c]] = (f(&p) - f(&m)) / (2.0 * eps);
        }
        g
    }

    fn check(x0: Tensor, build: impl Fn(&mut Tape, Var) -> Var) {
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let y = build(&mut tape, x);
        let analytic = tape.backward(y).get(x).cloned().unwrap();
        let numeric = numeric_grad(&x0, |v| {
            let mut t = Tape::new();
            let x = t.leaf(v.clone());
            let y = build(&mut t, x);
            t.scalar(y)
        });
        for (a, n) in analytic.iter().zip(numeric.iter()) {
            assert!((a - n).abs() < 1e-6 * (1.0 + n.abs()), "{a} vs {n}");
        }
    }

    #[test]
    fn square_probe() {
        let mut tape = Tape::new();
        let x = tape.scalar_leaf(3.0);
        let y = tape.square(x);
        assert_eq!(tape.backward(y).scalar(x), 6.0);
    }

    #[test]
    fn unused_leaf_has_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.scalar_leaf(3.0);
        let unused = tape.scalar_leaf(1.0);
        let c = tape.constant(array![[2.0]]);
        let y = tape.mul(x, c);
        let g = tape.backward(y);
        assert!(g.get(unused).is_none());
        assert_eq!(g.scalar(unused), 0.0);
        assert_eq!(g.scalar(x), 2.0);
    }

    #[test]
    fn constant_output_has_zero_gradient() {
        let mut tape = Tape::new();
        let x = tape.scalar_leaf(3.0);
        let zero = tape.scale(x, 0.0);
        let y = tape.add_scalar(zero, 5.0);
        assert_eq!(tape.backward(y).scalar(x), 0.0);
    }

    #[test]
    fn dense_layer_chain() {
        let w = array![[0.3, -0.2], [0.1, 0.5], [-0.4, 0.2]];
        let xin = array![[1.0, 2.0, -1.0], [0.5, -0.3, 0.8]];
        check(w, |t, w| {
            let x = t.constant(xin.clone());
            let h = t.matmul(x, w);
            let h = t.shifted_softplus(h);
            let b = t.constant(array![[0.1, -0.1]]);
            let h = t.add_bias(h, b);
            let s = t.square(h);
            t.mean(s)
        });
    }

    #[test]
    fn elementwise_ops() {
        check(array![[0.7, 1.3], [2.0, 0.4]], |t, x| {
            let sp = t.softplus(x);
            let l = t.ln(sp);
            let d = t.div(x, sp);
            let m = t.mul(l, d);
            let s = t.sub(m, x);
            let a = t.add(s, sp);
            t.sum(a)
        });
    }

    #[test]
    fn gather_scatter_columns() {
        check(array![[0.2, -1.0], [0.5, 0.3], [1.5, -0.7]], |t, x| {
            let g = t.gather_rows(x, &[2, 0, 0, 1]);
            let s = t.scatter_add_rows(g, &[1, 1, 0, 2], 3);
            let c = t.select_column(s, 1);
            let r = t.scale_rows(s, c);
            let q = t.square(r);
            t.sum(q)
        });
    }

    #[test]
    fn shared_bias_and_row_scaling() {
        check(array![[0.3, -0.6, 0.9]], |t, b| {
            let x = t.constant(array![[1.0, 2.0, 3.0], [-1.0, 0.0, 1.0]]);
            let h = t.add_bias(x, b);
            let col = t.select_column(h, 0);
            let r = t.scale_rows(h, col);
            let sp = t.softplus(r);
            t.mean(sp)
        });
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(0.0), std::f64::consts::LN_2);
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0);
        assert_eq!(shifted_softplus(0.0), 0.0);
        assert!((sigmoid(-800.0)).is_finite());
    }

    #[test]
    fn non_finite_is_reported_with_layer() {
        let mut tape = Tape::new();
        let x = tape.scalar_leaf(-1.0);
        let y = tape.ln(x);
        match tape.ensure_finite(y, "probe") {
            Err(DiffError::NonFinite { layer }) => assert_eq!(layer, "probe"),
            other => panic!("{other:?}"),
        }
    }
}
