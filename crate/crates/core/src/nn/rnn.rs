//! LSTM and GRU cells expressed as tape operations.

use rand::Rng;

use super::graph::{Graph, Var};
use super::matrix::Matrix;
use super::params::{ParamId, ParamStore};

/// One direction of an LSTM. Gate blocks are laid out as `[input, forget, cell, output]`.
#[derive(Clone, Debug)]
pub struct LstmParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub bias: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (hidden as f64).sqrt();
        let w_ih = store.add(format!("{prefix}.w_ih"), Matrix::random_uniform(input_dim, 4 * hidden, scale, rng));
        let w_hh = store.add(format!("{prefix}.w_hh"), Matrix::random_uniform(hidden, 4 * hidden, scale, rng));
        let mut b = Matrix::random_uniform(1, 4 * hidden, scale, rng);
        for c in hidden..2 * hidden {
            b.set(0, c, 1.0);
        }
        let bias = store.add(format!("{prefix}.bias"), b);
        Self { w_ih, w_hh, bias, input_dim, hidden }
    }

    /// Runs the recurrence over the rows of `x` (`len x input_dim`) and
    /// returns the hidden states in input order (`len x hidden`).
    pub fn run(&self, g: &mut Graph, x: Var, reverse: bool) -> Var {
        let len = g.shape(x).0;
        assert!(len > 0, "LSTM over an empty sequence");
        let h = self.hidden;
        let w_ih = g.param(self.w_ih);
        let w_hh = g.param(self.w_hh);
        let bias = g.param(self.bias);
        let proj = g.matmul(x, w_ih);
        let proj = g.add_row(proj, bias);

        let mut states: Vec<Option<Var>> = vec![None; len];
        let mut prev: Option<(Var, Var)> = None;
        let steps: Vec<usize> = if reverse { (0..len).rev().collect() } else { (0..len).collect() };
        for t in steps {
            let mut z = g.slice_rows(proj, t, t + 1);
            if let Some((h_prev, _)) = prev {
                let rec = g.matmul(h_prev, w_hh);
                z = g.add(z, rec);
            }
            let i_pre = g.slice_cols(z, 0, h);
            let i_gate = g.sigmoid(i_pre);
            let c_pre = g.slice_cols(z, 2 * h, 3 * h);
            let cand = g.tanh(c_pre);
            let o_pre = g.slice_cols(z, 3 * h, 4 * h);
            let o_gate = g.sigmoid(o_pre);
            let mut c = g.mul(i_gate, cand);
            if let Some((_, c_prev)) = prev {
                let f_pre = g.slice_cols(z, h, 2 * h);
                let f_gate = g.sigmoid(f_pre);
                let kept = g.mul(f_gate, c_prev);
                c = g.add(kept, c);
            }
            let c_act = g.tanh(c);
            let h_t = g.mul(o_gate, c_act);
            states[t] = Some(h_t);
            prev = Some((h_t, c));
        }
        let states: Vec<Var> = states.into_iter().map(|s| s.expect("every step visited")).collect();
        g.concat_rows(&states)
    }
}

/// Bidirectional LSTM layer; output is `[forward; backward]` per position.
#[derive(Clone, Debug)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmParams {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden_per_dir: usize, rng: &mut R) -> Self {
        Self {
            forward: LstmParams::new(store, &format!("{prefix}.fwd"), input_dim, hidden_per_dir, rng),
            backward: LstmParams::new(store, &format!("{prefix}.bwd"), input_dim, hidden_per_dir, rng),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.forward.hidden + self.backward.hidden
    }

    pub fn run(&self, g: &mut Graph, x: Var) -> Var {
        let f = self.forward.run(g, x, false);
        let b = self.backward.run(g, x, true);
        g.concat_cols(&[f, b])
    }
}

/// GRU cell with separate input and recurrent biases; gate blocks `[reset, update, new]`.
#[derive(Clone, Debug)]
pub struct GruCellParams {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b_ih: ParamId,
    pub b_hh: ParamId,
    pub input_dim: usize,
    pub hidden: usize,
}

impl GruCellParams {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, input_dim: usize, hidden: usize, rng: &mut R) -> Self {
        let scale = 1.0 / (hidden as f64).sqrt();
        Self {
            w_ih: store.add(format!("{prefix}.w_ih"), Matrix::random_uniform(input_dim, 3 * hidden, scale, rng)),
            w_hh: store.add(format!("{prefix}.w_hh"), Matrix::random_uniform(hidden, 3 * hidden, scale, rng)),
            b_ih: store.add(format!("{prefix}.b_ih"), Matrix::random_uniform(1, 3 * hidden, scale, rng)),
            b_hh: store.add(format!("{prefix}.b_hh"), Matrix::random_uniform(1, 3 * hidden, scale, rng)),
            input_dim,
            hidden,
        }
    }

    /// One step: `state` is `1 x hidden`, `input` is `1 x input_dim`.
    pub fn step(&self, g: &mut Graph, state: Var, input: Var) -> Var {
        let h = self.hidden;
        let w_ih = g.param(self.w_ih);
        let w_hh = g.param(self.w_hh);
        let b_ih = g.param(self.b_ih);
        let b_hh = g.param(self.b_hh);
        let gi = g.matmul(input, w_ih);
        let gi = g.add(gi, b_ih);
        let gh = g.matmul(state, w_hh);
        let gh = g.add(gh, b_hh);

        let gi_r = g.slice_cols(gi, 0, h);
        let gh_r = g.slice_cols(gh, 0, h);
        let r_pre = g.add(gi_r, gh_r);
        let r = g.sigmoid(r_pre);
        let gi_z = g.slice_cols(gi, h, 2 * h);
        let gh_z = g.slice_cols(gh, h, 2 * h);
        let z_pre = g.add(gi_z, gh_z);
        let z = g.sigmoid(z_pre);
        let gi_n = g.slice_cols(gi, 2 * h, 3 * h);
        let gh_n = g.slice_cols(gh, 2 * h, 3 * h);
        let gated = g.mul(r, gh_n);
        let n_pre = g.add(gi_n, gated);
        let n = g.tanh(n_pre);
        let keep_new = g.one_minus(z);
        let a = g.mul(keep_new, n);
        let b = g.mul(z, state);
        g.add(a, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::matrix::sigmoid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn lstm_matches_hand_stepped_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let p = LstmParams::new(&mut store, "l", 2, 1, &mut rng);
        let x = Matrix::from_rows(&[vec![0.5, -0.3], vec![0.2, 0.9]]);
        let mut g = Graph::new(&store);
        let xv = g.constant(x.clone());
        let out = p.run(&mut g, xv, false);
        let out = g.value(out).clone();

        let (wi, wh, b) = (store.get(p.w_ih), store.get(p.w_hh), store.get(p.bias));
        let (mut hp, mut cp) = (0.0, 0.0);
        for t in 0..2 {
            let z: Vec<f64> = (0..4)
                .map(|k| x.get(t, 0) * wi.get(0, k) + x.get(t, 1) * wi.get(1, k) + hp * wh.get(0, k) + b.get(0, k))
                .collect();
            let c = sigmoid(z[1]) * cp + sigmoid(z[0]) * z[2].tanh();
            let h = sigmoid(z[3]) * c.tanh();
            assert!((out.get(t, 0) - h).abs() < 1e-14);
            hp = h;
            cp = c;
        }
    }

    #[test]
    fn bilstm_output_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let p = BiLstmParams::new(&mut store, "b", 3, 4, &mut rng);
        let mut g = Graph::new(&store);
        let x = g.constant(Matrix::filled(5, 3, 0.1));
        let y = p.run(&mut g, x);
        assert_eq!(g.shape(y), (5, 8));
    }
}
