//! OCR-to-object relational reasoning.
//!
//! Each OCR row attends over the detected objects twice: by meaning
//! (`u^O` against `u^D`) and by layout (8-dim positions), both reading the
//! object vectors `u^D`. The two results are summed into `û^O`.

use std::str::FromStr;

use rand::Rng;

use crate::attention::{attn, condense, condense_graph, AttnParams, AttnSite, PoolParams};
use crate::error::{Error, Result};
use crate::nn::{Graph, Matrix, ParamId, ParamStore, Var};

pub const POSITION_DIM: usize = 8;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RelationalMode {
    #[default]
    Full,
    SemanticOnly,
    PositionalOnly,
    /// One softmax-pooled object vector broadcast to every OCR row.
    WeightedSum,
    None,
}

impl RelationalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            RelationalMode::Full => "full",
            RelationalMode::SemanticOnly => "semantic_only",
            RelationalMode::PositionalOnly => "positional_only",
            RelationalMode::WeightedSum => "weighted_sum",
            RelationalMode::None => "none",
        }
    }
}

impl FromStr for RelationalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => RelationalMode::Full,
            "semantic_only" => RelationalMode::SemanticOnly,
            "positional_only" => RelationalMode::PositionalOnly,
            "weighted_sum" => RelationalMode::WeightedSum,
            "none" => RelationalMode::None,
            other => {
                return Err(Error::Config(format!(
                    "relational_mode must be one of full|semantic_only|positional_only|weighted_sum|none, got `{other}`"
                )))
            }
        })
    }
}

#[derive(Clone, Debug)]
pub struct Relater {
    pub semantic: AttnSite,
    pub positional: AttnSite,
    pub baseline_w: ParamId,
    pub dim: usize,
}

impl Relater {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, dim: usize, attn_hidden: usize, rng: &mut R) -> Self {
        let semantic = AttnSite::new(store, &format!("{prefix}.semantic"), dim, attn_hidden, rng);
        let positional = AttnSite::new(store, &format!("{prefix}.positional"), POSITION_DIM, attn_hidden, rng);
        let baseline_w = store.add(format!("{prefix}.weighted_sum"), Matrix::random_uniform(1, dim, 1.0 / (dim as f64).sqrt(), rng));
        Self { semantic, positional, baseline_w, dim }
    }

    /// `û^O` for `o` OCR rows against `n >= 1` objects; zero rows when `n == 0`.
    pub fn relate(&self, g: &mut Graph, mode: RelationalMode, u_o: Var, p_o: Var, objects: Option<(Var, Var)>) -> Var {
        let rows = g.shape(u_o).0;
        let zeros = || Matrix::zeros(rows, self.dim);
        let Some((u_d, p_d)) = objects else { return g.constant(zeros()) };
        match mode {
            RelationalMode::None => g.constant(zeros()),
            RelationalMode::SemanticOnly => self.semantic.apply(g, u_o, u_d, u_d),
            RelationalMode::PositionalOnly => self.positional.apply(g, p_o, p_d, u_d),
            RelationalMode::Full => {
                let s = self.semantic.apply(g, u_o, u_d, u_d);
                let p = self.positional.apply(g, p_o, p_d, u_d);
                g.add(s, p)
            }
            RelationalMode::WeightedSum => {
                let w = g.param(self.baseline_w);
                let pooled = condense_graph(g, u_d, w);
                let ones = g.constant(Matrix::filled(rows, 1, 1.0));
                g.matmul(ones, pooled)
            }
        }
    }
}

/// `Attn(u^O, u^D, u^D)`.
pub fn semantic_attention(u_o: &Matrix, u_d: &Matrix, params: &AttnParams) -> Result<Matrix> {
    attn(u_o, u_d, u_d, params)
}

/// `Attn(p^O, p^D, u^D)`.
pub fn positional_attention(p_o: &Matrix, p_d: &Matrix, u_d: &Matrix, params: &AttnParams) -> Result<Matrix> {
    if p_o.cols() != POSITION_DIM || p_d.cols() != POSITION_DIM {
        return Err(Error::Shape(format!("positions must have {POSITION_DIM} columns")));
    }
    attn(p_o, p_d, u_d, params)
}

pub fn fuse(semantic: &Matrix, positional: &Matrix) -> Result<Matrix> {
    if semantic.shape() != positional.shape() {
        return Err(Error::Shape(format!("cannot sum {:?} and {:?}", semantic.shape(), positional.shape())));
    }
    Ok(semantic.zip_map(positional, |a, b| a + b))
}

/// Softmax-weighted mean of the object rows with `α ∝ exp(w · u_j)`.
pub fn object_weighted_sum_baseline(u_d: &Matrix, w: &[f64]) -> Result<Vec<f64>> {
    if u_d.rows() == 0 {
        return Err(Error::Empty("weighted sum over zero objects"));
    }
    condense(u_d, &PoolParams { w: w.to_vec() })
}
