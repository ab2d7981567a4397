//! Central finite differences against the tape's analytic gradients.
//!
//! Per tensor the error is `‖a − n‖ / max(‖a‖, ‖n‖, floor)` over the
//! checked entries. Tensors with at most `max_entries` entries are checked in
//! full; larger ones on a seeded sample of entries.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::corpus::{generate_synthetic, Dataset, SyntheticConfig};
use crate::error::{Error, Result};
use crate::model::{prepare_sample, vocabulary_for, Model, PreparedSample};
use crate::nn::{Gradients, ParamStore};

#[derive(Clone, Debug)]
pub struct GradcheckOptions {
    pub step: f64,
    pub tolerance: f64,
    pub max_entries: usize,
    /// Norms below this are compared in absolute terms.
    pub floor: f64,
    /// Multiplies the seeded initialization before checking. At the raw init
    /// some deep attention tensors have gradients near 1e-10, where
    /// finite-difference roundoff dominates.
    pub param_scale: f64,
    /// Test hook: scales this tensor's analytic gradient by 1.5 before comparing.
    pub corrupt_tensor: Option<String>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self { step: 1e-5, tolerance: 1e-4, max_entries: 256, floor: 1e-6, param_scale: 3.0, corrupt_tensor: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TensorCheck {
    pub name: String,
    pub rel_error: f64,
    pub checked: usize,
    pub total: usize,
    pub analytic_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub passed: bool,
    pub tolerance: f64,
    pub max_rel_error: f64,
    pub worst_tensor: String,
    /// Tensors over tolerance.
    pub failing: Vec<String>,
    pub tensors: Vec<TensorCheck>,
}

/// Compares `analytic` with central differences of `loss` for every tensor
/// in the parameter store that `store_of` exposes inside `target`.
pub fn check_tensors<M>(
    target: &mut M,
    store_of: impl Fn(&mut M) -> &mut ParamStore,
    loss: impl Fn(&M) -> f64,
    analytic: &Gradients,
    opts: &GradcheckOptions,
    seed: u64,
) -> Vec<TensorCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let ids: Vec<_> = store_of(target).ids().collect();
    let mut out = Vec::with_capacity(ids.len());
    for id in ids {
        let store = store_of(target);
        let name = store.name(id).to_string();
        let total = store.get(id).len();
        let entries: Vec<usize> =
            if total <= opts.max_entries { (0..total).collect() } else { sample(&mut rng, total, opts.max_entries).into_vec() };
        let scale = if opts.corrupt_tensor.as_deref() == Some(name.as_str()) { 1.5 } else { 1.0 };
        let (mut diff, mut a_norm, mut n_norm) = (0.0f64, 0.0f64, 0.0f64);
        for &e in &entries {
            let orig = store_of(target).get(id).data()[e];
            store_of(target).get_mut(id).data_mut()[e] = orig + opts.step;
            let plus = loss(target);
            store_of(target).get_mut(id).data_mut()[e] = orig - opts.step;
            let minus = loss(target);
            store_of(target).get_mut(id).data_mut()[e] = orig;
            let numeric = (plus - minus) / (2.0 * opts.step);
            let a = analytic.get(id).data()[e] * scale;
            diff += (a - numeric).powi(2);
            a_norm += a * a;
            n_norm += numeric * numeric;
        }
        let (diff, a_norm, n_norm) = (diff.sqrt(), a_norm.sqrt(), n_norm.sqrt());
        let rel_error = diff / a_norm.max(n_norm).max(opts.floor);
        out.push(TensorCheck { name, rel_error, checked: entries.len(), total, analytic_norm: a_norm });
    }
    out
}

pub fn summarize(seed: u64, tensors: Vec<TensorCheck>, tolerance: f64) -> GradcheckReport {
    let worst = tensors.iter().max_by(|a, b| a.rel_error.total_cmp(&b.rel_error));
    let max_rel_error = worst.map_or(0.0, |t| t.rel_error);
    let worst_tensor = worst.map(|t| t.name.clone()).unwrap_or_default();
    let failing: Vec<String> = tensors.iter().filter(|t| !(t.rel_error < tolerance)).map(|t| t.name.clone()).collect();
    GradcheckReport { seed, passed: failing.is_empty(), tolerance, max_rel_error, worst_tensor, failing, tensors }
}

/// Sum of sample losses and its gradients.
fn total_loss_and_grads(model: &Model, preps: &[PreparedSample]) -> Result<(f64, Gradients)> {
    let mut total = 0.0;
    let mut grads = Gradients::zeros_like(&model.store);
    for p in preps {
        let (l, g, _) = model.loss_and_gradients(p, None)?;
        total += l;
        grads.accumulate(&g);
    }
    Ok((total, grads))
}

/// Small samples covering every pool: OCR spans, additional texts, an
/// OCR-free sample, and samples with and without objects.
pub fn fixture_samples(seed: u64) -> Result<(Dataset, Vec<Vec<String>>)> {
    let mut ds = generate_synthetic(SyntheticConfig { num_samples: 4, vocab_size: 12, seed })?;
    ds.samples[3].ocr_tokens.clear();
    ds.samples[2].objects.clear();
    let extra = vec![vec!["red".to_string(), "stop sign".to_string()], Vec::new(), Vec::new(), vec!["blue".to_string()]];
    Ok((ds, extra))
}

pub fn gradcheck(cfg: &RunConfig, seed: u64, opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let dims = [cfg.word_dim, cfg.ctx_dim, cfg.hidden, cfg.attn_hidden, cfg.answer_dim];
    if dims.iter().any(|&d| d > 16) {
        return Err(Error::Config("gradcheck runs at toy dims: word_dim, ctx_dim, hidden, attn_hidden and answer_dim must be <= 16".into()));
    }
    let (ds, extra) = fixture_samples(seed)?;
    let all_extra: Vec<String> = extra.iter().flatten().cloned().collect();
    let vocab = vocabulary_for(cfg, &[&ds], &all_extra);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = Model::new(cfg, vocab, &mut rng)?;
    model.frozen.clear();
    for id in model.store.ids().collect::<Vec<_>>() {
        model.store.get_mut(id).scale_assign(opts.param_scale);
    }
    let preps = ds
        .samples
        .iter()
        .zip(&extra)
        .map(|(s, e)| prepare_sample(s, cfg.dictionary_mode, e))
        .collect::<Result<Vec<_>>>()?;
    let (_, analytic) = total_loss_and_grads(&model, &preps)?;
    let tensors = check_tensors(
        &mut model,
        |m| &mut m.store,
        |m| preps.iter().map(|p| m.loss(p).unwrap_or(f64::NAN)).sum(),
        &analytic,
        opts,
        seed,
    );
    Ok(summarize(seed, tensors, opts.tolerance))
}
