//! A small reverse-mode automatic differentiation tape over [`Matrix`].
//!
//! A [`Graph`] is built per forward pass. Parameters are borrowed from a
//! [`ParamStore`] rather than copied, and each parameter gets a single node
//! no matter how often it is used, so its gradient is accumulated once.

use super::matrix::{sigmoid, softmax_in_place, Matrix};
use super::params::{Gradients, ParamId, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulT(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Scale(Var, f64),
    OneMinus(Var),
    Relu(Var),
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    Transpose(Var),
    SumAll(Var),
    Bce { probs: Var, labels: Vec<f64>, lo: f64, hi: f64 },
}

struct Node {
    op: Op,
    /// `None` for parameter nodes, whose value lives in the store.
    value: Option<Matrix>,
}

pub struct Graph<'s> {
    store: &'s ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
}

impl<'s> Graph<'s> {
    pub fn new(store: &'s ParamStore) -> Self {
        Self { store, nodes: Vec::new(), param_vars: vec![None; store.len()] }
    }

    pub fn store(&self) -> &'s ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Matrix) -> Var {
        self.nodes.push(Node { op, value: Some(value) });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        let node = &self.nodes[v.0];
        match (&node.op, &node.value) {
            (_, Some(m)) => m,
            (Op::Param(id), None) => self.store.get(*id),
            _ => unreachable!("node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    /// Value of a `1 x 1` node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "scalar() on a {:?} node", m.shape());
        m.get(0, 0)
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(Op::Constant, m)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.index()] {
            return v;
        }
        self.nodes.push(Node { op: Op::Param(id), value: None });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.index()] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), out)
    }

    pub fn matmul_t(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul_t(self.value(b));
        self.push(Op::MatMulT(a, b), out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), out)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), out)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), out)
    }

    /// Adds a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (am, r) = (self.value(a), self.value(row));
        assert_eq!(r.shape(), (1, am.cols()), "add_row expects a 1x{} row, got {:?}", am.cols(), r.shape());
        let mut out = am.clone();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(r.row(0)) {
                *o += b;
            }
        }
        self.push(Op::AddRow(a, row), out)
    }

    /// Multiplies every row of `a` elementwise by a `1 x n` row.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Var {
        let (am, r) = (self.value(a), self.value(row));
        assert_eq!(r.shape(), (1, am.cols()), "mul_row expects a 1x{} row, got {:?}", am.cols(), r.shape());
        let mut out = am.clone();
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(r.row(0)) {
                *o *= b;
            }
        }
        self.push(Op::MulRow(a, row), out)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).scaled(s);
        self.push(Op::Scale(a, s), out)
    }

    pub fn one_minus(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| 1.0 - x);
        self.push(Op::OneMinus(a), out)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), out)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(Op::Sigmoid(a), out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(Op::Tanh(a), out)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let out = self.value(a).softmax_rows();
        self.push(Op::SoftmaxRows(a), out)
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        if parts.len() == 1 {
            return parts[0];
        }
        let mats: Vec<&Matrix> = parts.iter().map(|&v| self.value(v)).collect();
        let out = Matrix::concat_cols(&mats);
        self.push(Op::ConcatCols(parts.to_vec()), out)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        if parts.len() == 1 {
            return parts[0];
        }
        let mats: Vec<&Matrix> = parts.iter().map(|&v| self.value(v)).collect();
        let out = Matrix::concat_rows(&mats);
        self.push(Op::ConcatRows(parts.to_vec()), out)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice_cols(start, end);
        self.push(Op::SliceCols(a, start), out)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let out = self.value(a).slice_rows(start, end);
        self.push(Op::SliceRows(a, start), out)
    }

    pub fn gather_rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let src = self.value(a);
        let mut out = Matrix::zeros(indices.len(), src.cols());
        for (i, &r) in indices.iter().enumerate() {
            out.row_mut(i).copy_from_slice(src.row(r));
        }
        self.push(Op::GatherRows(a, indices.to_vec()), out)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transpose();
        self.push(Op::Transpose(a), out)
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let out = Matrix::filled(1, 1, self.value(a).sum());
        self.push(Op::SumAll(a), out)
    }

    /// Summed binary cross-entropy of every entry of `probs` against
    /// `labels`, with probabilities clamped to `[lo, hi]`.
    pub fn bce(&mut self, probs: Var, labels: &[f64], lo: f64, hi: f64) -> Var {
        let p = self.value(probs);
        assert_eq!(p.len(), labels.len(), "bce label count mismatch");
        let total: f64 = p
            .data()
            .iter()
            .zip(labels)
            .map(|(&p, &y)| {
                let c = p.clamp(lo, hi);
                -(y * c.ln() + (1.0 - y) * (1.0 - c).ln())
            })
            .sum();
        self.push(Op::Bce { probs, labels: labels.to_vec(), lo, hi }, Matrix::filled(1, 1, total))
    }

    /// Row sums of every softmax output recorded on this tape.
    pub fn softmax_row_sums(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .filter(|n| matches!(n.op, Op::SoftmaxRows(_)))
            .flat_map(|n| {
                let m = n.value.as_ref().expect("softmax node value");
                (0..m.rows()).map(move |r| m.row(r).iter().sum::<f64>())
            })
            .collect()
    }

    /// Back-propagates from the scalar node `output` and returns parameter gradients.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.shape(output), (1, 1), "backward expects a scalar output");
        let mut grads: Vec<Option<Matrix>> = (0..=output.0).map(|_| None).collect();
        grads[output.0] = Some(Matrix::filled(1, 1, 1.0));
        let mut out = Gradients::zeros_like(self.store);

        for i in (0..=output.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            let y = node.value.as_ref();
            match &node.op {
                Op::Constant => {}
                Op::Param(id) => out.get_mut(*id).add_assign(&g),
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(self.value(*b));
                    let gb = self.value(*a).t_matmul(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulT(a, b) => {
                    let ga = g.matmul(self.value(*b));
                    let gb = g.t_matmul(self.value(*a));
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *a, g.clone());
                    acc(&mut grads, *b, g.scaled(-1.0));
                }
                Op::Mul(a, b) => {
                    let ga = g.zip_map(self.value(*b), |x, y| x * y);
                    let gb = g.zip_map(self.value(*a), |x, y| x * y);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::AddRow(a, r) => {
                    acc(&mut grads, *r, g.sum_rows());
                    acc(&mut grads, *a, g);
                }
                Op::MulRow(a, r) => {
                    let rv = self.value(*r);
                    let av = self.value(*a);
                    let mut ga = g.clone();
                    let mut gr = Matrix::zeros(1, g.cols());
                    for row in 0..g.rows() {
                        for c in 0..g.cols() {
                            let gv = g.get(row, c);
                            ga.set(row, c, gv * rv.get(0, c));
                            gr.set(0, c, gr.get(0, c) + gv * av.get(row, c));
                        }
                    }
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *r, gr);
                }
                Op::Scale(a, s) => acc(&mut grads, *a, g.scaled(*s)),
                Op::OneMinus(a) => acc(&mut grads, *a, g.scaled(-1.0)),
                Op::Relu(a) => {
                    let ga = g.zip_map(self.value(*a), |gv, x| if x > 0.0 { gv } else { 0.0 });
                    acc(&mut grads, *a, ga);
                }
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(y.unwrap(), |gv, s| gv * s * (1.0 - s));
                    acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = g.zip_map(y.unwrap(), |gv, t| gv * (1.0 - t * t));
                    acc(&mut grads, *a, ga);
                }
                Op::SoftmaxRows(a) => {
                    let yv = y.unwrap();
                    let mut ga = Matrix::zeros(g.rows(), g.cols());
                    for r in 0..g.rows() {
                        let inner: f64 = g.row(r).iter().zip(yv.row(r)).map(|(a, b)| a * b).sum();
                        for c in 0..g.cols() {
                            ga.set(r, c, yv.get(r, c) * (g.get(r, c) - inner));
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let w = self.value(p).cols();
                        acc(&mut grads, p, g.slice_cols(start, start + w));
                        start += w;
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut start = 0;
                    for &p in parts {
                        let h = self.value(p).rows();
                        acc(&mut grads, p, g.slice_rows(start, start + h));
                        start += h;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Matrix::zeros(rows, cols);
                    for r in 0..rows {
                        ga.row_mut(r)[*start..*start + g.cols()].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SliceRows(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Matrix::zeros(rows, cols);
                    for r in 0..g.rows() {
                        ga.row_mut(start + r).copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::GatherRows(a, indices) => {
                    // Scatter straight into the parameter buffer when gathering from a
                    // parameter: embedding tables are large and mostly untouched.
                    if let Op::Param(id) = self.nodes[a.0].op {
                        let target = out.get_mut(id);
                        for (i, &r) in indices.iter().enumerate() {
                            for (t, v) in target.row_mut(r).iter_mut().zip(g.row(i)) {
                                *t += v;
                            }
                        }
                    } else {
                        let (rows, cols) = self.shape(*a);
                        let mut ga = Matrix::zeros(rows, cols);
                        for (i, &r) in indices.iter().enumerate() {
                            for (t, v) in ga.row_mut(r).iter_mut().zip(g.row(i)) {
                                *t += v;
                            }
                        }
                        acc(&mut grads, *a, ga);
                    }
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::SumAll(a) => {
                    let (rows, cols) = self.shape(*a);
                    acc(&mut grads, *a, Matrix::filled(rows, cols, g.get(0, 0)));
                }
                Op::Bce { probs, labels, lo, hi } => {
                    let pv = self.value(*probs);
                    let scale = g.get(0, 0);
                    let mut gp = Matrix::zeros(pv.rows(), pv.cols());
                    for (k, (&p, &y)) in pv.data().iter().zip(labels).enumerate() {
                        if p > *lo && p < *hi {
                            gp.data_mut()[k] = scale * (-y / p + (1.0 - y) / (1.0 - p));
                        }
                    }
                    acc(&mut grads, *probs, gp);
                }
            }
        }
        out
    }
}

fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Softmax over a plain slice, for callers outside a tape.
pub fn softmax_vec(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    softmax_in_place(&mut v);
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Central-difference check of d(sum of f)/d(param) for a single-parameter graph.
    fn check(build: impl Fn(&mut Graph, Var) -> Var, rows: usize, cols: usize, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let id = store.add("x", Matrix::random_uniform(rows, cols, 1.0, &mut rng));
        let eval = |s: &ParamStore| {
            let mut g = Graph::new(s);
            let x = g.param(id);
            let y = build(&mut g, x);
            let l = g.sum_all(y);
            g.scalar(l)
        };
        let analytic = {
            let mut g = Graph::new(&store);
            let x = g.param(id);
            let y = build(&mut g, x);
            let l = g.sum_all(y);
            g.backward(l).get(id).clone()
        };
        let h = 1e-5;
        for k in 0..rows * cols {
            let mut plus = store.clone();
            plus.get_mut(id).data_mut()[k] += h;
            let mut minus = store.clone();
            minus.get_mut(id).data_mut()[k] -= h;
            let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
            let a = analytic.data()[k];
            assert!((a - numeric).abs() <= 1e-6 * (1.0 + a.abs()), "entry {k}: analytic {a} vs numeric {numeric}");
        }
    }

    #[test]
    fn elementwise_ops_have_correct_gradients() {
        check(|g, x| g.tanh(x), 2, 3, 1);
        check(|g, x| g.sigmoid(x), 2, 3, 2);
        check(|g, x| { let s = g.softmax_rows(x); let w = g.mul(s, x); g.scale(w, 3.0) }, 3, 4, 3);
        check(|g, x| { let a = g.one_minus(x); g.mul(a, x) }, 2, 2, 4);
    }

    #[test]
    fn structural_ops_have_correct_gradients() {
        check(|g, x| { let t = g.transpose(x); let p = g.matmul(x, t); g.tanh(p) }, 3, 2, 5);
        check(|g, x| { let p = g.matmul_t(x, x); g.sigmoid(p) }, 3, 2, 6);
        check(|g, x| {
            let a = g.slice_cols(x, 0, 2);
            let b = g.slice_rows(x, 1, 3);
            let c = g.concat_cols(&[a, x]);
            let d = g.gather_rows(c, &[2, 0, 2]);
            let bt = g.tanh(b);
            let e = g.concat_rows(&[bt, x]);
            let f = g.sum_all(e);
            let s = g.sum_all(d);
            let m = g.mul(f, s);
            g.sigmoid(m)
        }, 3, 3, 7);
        check(|g, x| {
            let r = g.slice_rows(x, 0, 1);
            let a = g.add_row(x, r);
            let b = g.mul_row(a, r);
            g.tanh(b)
        }, 3, 2, 8);
    }

    #[test]
    fn bce_gradient_matches_finite_differences() {
        check(|g, x| {
            let p = g.sigmoid(x);
            g.bce(p, &[1.0, 0.0, 1.0, 0.0], 1e-7, 1.0 - 1e-7)
        }, 1, 4, 9);
    }

    #[test]
    fn shared_parameter_gets_single_node() {
        let mut store = ParamStore::new();
        let id = store.add("w", Matrix::filled(1, 1, 2.0));
        let mut g = Graph::new(&store);
        let a = g.param(id);
        let b = g.param(id);
        assert_eq!(a, b);
        let p = g.mul(a, b);
        let grads = g.backward(p);
        assert_eq!(grads.get(id).get(0, 0), 4.0);
    }
}
