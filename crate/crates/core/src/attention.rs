//! The attention operator shared by every attention site in the network.
//!
//! `attn(A, B, C)` scores each query row `a_i` against each key row `b_j`
//! with a diagonal bilinear form over ReLU projections,
//!
//! ```text
//! s_ij = ReLU(a_i U) · diag(D) · ReLU(b_j U)
//! α_i· = softmax_j(s_i·)
//! out_i = Σ_j α_ij c_j
//! ```
//!
//! with `U: d x k` and `D` a `k`-vector. `condense` pools a sequence into one
//! vector with `β ∝ exp(H w)`.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Graph, Matrix, ParamId, ParamStore, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct AttnParams {
    /// `d x k` projection.
    pub u: Matrix,
    /// Diagonal of `D`, length `k`.
    pub diag: Vec<f64>,
}

impl AttnParams {
    pub fn new(u: Matrix, diag: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || u.cols() != diag.len() {
            return Err(Error::Shape(format!("U is {:?} but D has {} entries", u.shape(), diag.len())));
        }
        if !u.is_finite() || diag.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("attention params", "entries must be finite"));
        }
        Ok(Self { u, diag })
    }

    pub fn input_dim(&self) -> usize {
        self.u.rows()
    }

    pub fn hidden(&self) -> usize {
        self.diag.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoolParams {
    pub w: Vec<f64>,
}

/// An attention site whose parameters live in a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct AttnSite {
    pub u: ParamId,
    pub diag: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl AttnSite {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let u = store.add(format!("{prefix}.u"), Matrix::random_uniform(input_dim, hidden, 1.0 / (input_dim as f64).sqrt(), rng));
        let d: Vec<f64> = (0..hidden).map(|_| rng.gen_range(0.5..1.5) / (hidden as f64).sqrt()).collect();
        let diag = store.add(format!("{prefix}.diag"), Matrix::row_vector(&d));
        Self { u, diag, input_dim, hidden }
    }

    pub fn params(&self, store: &ParamStore) -> AttnParams {
        AttnParams { u: store.get(self.u).clone(), diag: store.get(self.diag).data().to_vec() }
    }

    pub fn weights(&self, g: &mut Graph, queries: Var, keys: Var) -> Var {
        let u = g.param(self.u);
        let d = g.param(self.diag);
        attn_weights_graph(g, queries, keys, u, d)
    }

    pub fn apply(&self, g: &mut Graph, queries: Var, keys: Var, values: Var) -> Var {
        let alpha = self.weights(g, queries, keys);
        g.matmul(alpha, values)
    }
}

/// Attention weights `m x n` on the tape.
pub fn attn_weights_graph(g: &mut Graph, queries: Var, keys: Var, u: Var, diag: Var) -> Var {
    let qa = g.matmul(queries, u);
    let qa = g.relu(qa);
    let kb = g.matmul(keys, u);
    let kb = g.relu(kb);
    let scaled = g.mul_row(qa, diag);
    let scores = g.matmul_t(scaled, kb);
    g.softmax_rows(scores)
}

/// `condense` on the tape; `w` is a `1 x d` row. Returns `1 x d`.
pub fn condense_graph(g: &mut Graph, h: Var, w: Var) -> Var {
    let beta = condense_weights_graph(g, h, w);
    g.matmul(beta, h)
}

/// Pooling weights `β` as a `1 x m` row.
pub fn condense_weights_graph(g: &mut Graph, h: Var, w: Var) -> Var {
    let scores = g.matmul_t(h, w);
    let scores = g.transpose(scores);
    g.softmax_rows(scores)
}

fn check_attn(a: &Matrix, b: &Matrix, params: &AttnParams) -> Result<()> {
    if b.rows() == 0 {
        return Err(Error::Empty("attention needs at least one key"));
    }
    if a.cols() != params.input_dim() || b.cols() != params.input_dim() {
        return Err(Error::Shape(format!(
            "queries have {} and keys {} columns, attention expects {}",
            a.cols(),
            b.cols(),
            params.input_dim()
        )));
    }
    Ok(())
}

fn with_params<T>(params: &AttnParams, f: impl FnOnce(&mut Graph, Var, Var) -> T) -> T {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let u = g.constant(params.u.clone());
    let d = g.constant(Matrix::row_vector(&params.diag));
    f(&mut g, u, d)
}

/// Attention weights `α` (`m x n`, rows sum to one).
pub fn attn_weights(a: &Matrix, b: &Matrix, params: &AttnParams) -> Result<Matrix> {
    check_attn(a, b, params)?;
    Ok(with_params(params, |g, u, d| {
        let (av, bv) = (g.constant(a.clone()), g.constant(b.clone()));
        let w = attn_weights_graph(g, av, bv, u, d);
        g.value(w).clone()
    }))
}

/// `Attn(A, B, C)`: `A` is `m x d`, `B` is `n x d`, `C` is `n x e`; returns `m x e`.
pub fn attn(a: &Matrix, b: &Matrix, c: &Matrix, params: &AttnParams) -> Result<Matrix> {
    check_attn(a, b, params)?;
    if c.rows() != b.rows() {
        return Err(Error::Shape(format!("{} keys but {} values", b.rows(), c.rows())));
    }
    let alpha = attn_weights(a, b, params)?;
    Ok(alpha.matmul(c))
}

/// `Attn(H, H, H)`.
pub fn self_attention(h: &Matrix, params: &AttnParams) -> Result<Matrix> {
    if h.rows() == 0 {
        return Err(Error::Empty("self-attention over an empty sequence"));
    }
    attn(h, h, h, params)
}

pub fn condense_weights(h: &Matrix, pool: &PoolParams) -> Result<Vec<f64>> {
    if h.rows() == 0 {
        return Err(Error::Empty("condense over an empty sequence"));
    }
    if pool.w.len() != h.cols() {
        return Err(Error::Shape(format!("pool vector has {} entries, rows have {}", pool.w.len(), h.cols())));
    }
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let hv = g.constant(h.clone());
    let w = g.constant(Matrix::row_vector(&pool.w));
    let beta = condense_weights_graph(&mut g, hv, w);
    Ok(g.value(beta).data().to_vec())
}

/// Softmax-weighted sum of the rows of `h`.
pub fn condense(h: &Matrix, pool: &PoolParams) -> Result<Vec<f64>> {
    let beta = condense_weights(h, pool)?;
    Ok(Matrix::row_vector(&beta).matmul(h).into_vec())
}
