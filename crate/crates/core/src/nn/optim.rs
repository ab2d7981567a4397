use super::matrix::Matrix;
use super::params::{Gradients, ParamId, ParamStore};

/// Adamax (the infinity-norm variant of Adam).
///
/// ```text
/// m ← β1·m + (1−β1)·g
/// u ← max(β2·u, |g|)
/// θ ← θ − (lr / (1−β1^t)) · m / (u + ε)
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct Adamax {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    pub first_moment: Vec<Matrix>,
    pub inf_norm: Vec<Matrix>,
}

impl Adamax {
    pub fn new(store: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        let zeros = || store.iter().map(|(_, p)| Matrix::zeros(p.value.rows(), p.value.cols())).collect::<Vec<_>>();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            first_moment: zeros(),
            inf_norm: zeros(),
        }
    }

    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.update_except(store, grads, &[]);
    }

    /// Like [`Adamax::update`] but leaves the `frozen` tensors and their state untouched.
    pub fn update_except(&mut self, store: &mut ParamStore, grads: &Gradients, frozen: &[ParamId]) {
        self.step += 1;
        let bias_correction = 1.0 - self.beta1.powi(self.step.min(i32::MAX as u64) as i32);
        let step_size = self.lr / bias_correction;
        let ids: Vec<_> = store.ids().filter(|id| !frozen.contains(id)).collect();
        for id in ids {
            let k = id.index();
            let grad = grads.get(id);
            let param = store.get_mut(id);
            let m = self.first_moment[k].data_mut();
            let u = self.inf_norm[k].data_mut();
            for (((theta, &g), m), u) in param.data_mut().iter_mut().zip(grad.data()).zip(m).zip(u) {
                let g = g + self.weight_decay * *theta;
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *u = (self.beta2 * *u).max(g.abs());
                *theta -= step_size * *m / (*u + self.eps);
            }
        }
    }
}
