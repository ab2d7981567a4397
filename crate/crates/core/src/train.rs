//! Training loop, batch prediction and evaluation of a model on a dataset.
//!
//! One `ChaCha8Rng` seeded from `config.seed` drives, in order: parameter
//! init, then per epoch the batch shuffle and dropout masks. Gradients are
//! summed sample by sample in batch order and averaged, so a run is fully
//! determined by (seed, config, data).

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::answer::Prediction;
use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::corpus::{Dataset, Sample};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_predictions, EvalReport};
use crate::model::{prepare_sample, vocabulary_for, Model, PreparedSample};
use crate::nn::{Adamax, Gradients};
use crate::retrieval::RetrievalIndex;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean per-sample loss over the epoch.
    pub train_loss: f64,
    pub dev_anls: Option<f64>,
    /// Training samples whose gold answer no candidate matches.
    pub unreachable: usize,
}

impl EpochLog {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("epoch log serializes")
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Parameters of the best dev epoch (the last epoch without dev data).
    pub model: Model,
    pub best: Checkpoint,
    pub last: Checkpoint,
    pub best_epoch: usize,
    pub log: Vec<EpochLog>,
}

/// Additional answers for `sample`: retrieved by its question, none in dictionary mode.
pub fn additional_texts(sample: &Sample, cfg: &RunConfig, index: Option<&RetrievalIndex>) -> Vec<String> {
    match index {
        Some(idx) if !cfg.dictionary_mode => idx.retrieve(&sample.question, cfg.top_k),
        _ => Vec::new(),
    }
}

pub fn prepare_dataset(dataset: &Dataset, cfg: &RunConfig, index: Option<&RetrievalIndex>) -> Result<Vec<PreparedSample>> {
    dataset.samples.iter().map(|s| prepare_sample(s, cfg.dictionary_mode, &additional_texts(s, cfg, index))).collect()
}

/// Holds out the last `dev_size` training samples when no dev set is given.
pub fn split_train_dev(cfg: &RunConfig, train: &Dataset, dev: Option<&Dataset>) -> Result<(Dataset, Option<Dataset>)> {
    match dev {
        Some(d) => Ok((train.clone(), Some(d.clone()))),
        None if cfg.dev_size > 0 => {
            if cfg.dev_size >= train.len() {
                return Err(Error::Config(format!("dev_size {} leaves no training samples out of {}", cfg.dev_size, train.len())));
            }
            let (t, d) = train.split_at(train.len() - cfg.dev_size);
            Ok((t, Some(d)))
        }
        None => Ok((train.clone(), None)),
    }
}

pub fn train(cfg: &RunConfig, train: &Dataset, dev: Option<&Dataset>, index: Option<&RetrievalIndex>) -> Result<TrainOutcome> {
    train_with(cfg, train, dev, index, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_with(
    cfg: &RunConfig,
    train: &Dataset,
    dev: Option<&Dataset>,
    index: Option<&RetrievalIndex>,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set"));
    }
    let train_preps = prepare_dataset(train, cfg, index)?;
    let dev_preps = dev.map(|d| prepare_dataset(d, cfg, index)).transpose()?;
    let extra: Vec<String> = train_preps.iter().flat_map(|p| p.additional.iter().flat_map(|a| a.words.iter().cloned())).collect();
    let vocab = vocabulary_for(cfg, &[train], &extra);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut model = Model::new(cfg, vocab, &mut rng)?;
    let mut opt = Adamax::new(&model.store, cfg.lr, cfg.weight_decay);
    let mut order: Vec<usize> = (0..train_preps.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, Checkpoint)> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut unreachable = 0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = Gradients::zeros_like(&model.store);
            for &i in batch {
                let prep = &train_preps[i];
                let dropout = (cfg.dropout > 0.0).then_some((cfg.dropout, &mut rng));
                let (loss, g, reachable) = model.loss_and_gradients(prep, dropout)?;
                if !loss.is_finite() || !g.is_finite() {
                    return Err(Error::Divergence { epoch, sample_id: prep.sample_id.clone(), loss });
                }
                total += loss;
                unreachable += usize::from(!reachable);
                grads.accumulate(&g);
            }
            grads.scale(1.0 / batch.len() as f64);
            opt.update_except(&mut model.store, &grads, &model.frozen);
        }
        let dev_anls = match (&dev_preps, dev) {
            (Some(p), Some(d)) => Some(evaluate_model(&model, p, d)?.anls),
            _ => None,
        };
        let entry = EpochLog { epoch, train_loss: total / train_preps.len() as f64, dev_anls, unreachable };
        log::info!("{}", entry.to_json_line());
        on_epoch(&entry);
        let score = dev_anls.unwrap_or(f64::INFINITY);
        if best.as_ref().map_or(true, |(s, _, _)| score > *s || dev_anls.is_none()) {
            best = Some((score, epoch, Checkpoint::from_model(&model, epoch, &rng, Some(&opt))));
        }
        log.push(entry);
    }

    let last = Checkpoint::from_model(&model, cfg.epochs, &rng, Some(&opt));
    let (best_epoch, best) = match best {
        Some((_, e, ck)) => (e, ck),
        None => (0, last.clone()),
    };
    let model = if best_epoch == cfg.epochs || best_epoch == 0 { model } else { best.to_model()? };
    Ok(TrainOutcome { model, best, last, best_epoch, log })
}

pub fn predict_dataset(model: &Model, preps: &[PreparedSample]) -> Result<Vec<Prediction>> {
    preps.iter().map(|p| model.predict(p)).collect()
}

pub fn predictions_to_jsonl(preds: &[Prediction]) -> String {
    preds.iter().map(|p| p.to_json_line() + "\n").collect()
}

pub fn write_predictions(path: impl AsRef<Path>, preds: &[Prediction]) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(predictions_to_jsonl(preds).as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn prediction_map(preds: &[Prediction]) -> HashMap<String, String> {
    preds.iter().map(|p| (p.sample_id.clone(), p.answer.clone())).collect()
}

/// Predicts every prepared sample and scores against `gold` with the model's metric settings.
pub fn evaluate_model(model: &Model, preps: &[PreparedSample], gold: &Dataset) -> Result<EvalReport> {
    let preds = predict_dataset(model, preps)?;
    evaluate_predictions(&prediction_map(&preds), gold, &model.config.metrics())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, SyntheticConfig};

    fn tiny(epochs: usize, lr: f64) -> (RunConfig, Dataset) {
        let mut cfg = RunConfig::toy();
        cfg.epochs = epochs;
        cfg.lr = lr;
        cfg.batch_size = 2;
        (cfg, generate_synthetic(SyntheticConfig { num_samples: 6, vocab_size: 12, seed: 3 }).unwrap())
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let (cfg, ds) = tiny(1, 0.0);
        let out = train(&cfg, &ds, None, None).unwrap();
        let vocab = out.model.vocab.clone();
        let fresh = Model::new(&cfg, vocab, &mut ChaCha8Rng::seed_from_u64(cfg.seed)).unwrap();
        assert_eq!(out.model.store, fresh.store);
    }

    #[test]
    fn same_seed_same_log() {
        let (cfg, ds) = tiny(2, 0.01);
        let a = train(&cfg, &ds, Some(&ds), None).unwrap();
        let b = train(&cfg, &ds, Some(&ds), None).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.log.len(), 2);
    }

    #[test]
    fn dev_split() {
        let (mut cfg, ds) = tiny(1, 0.01);
        cfg.dev_size = 2;
        let (t, d) = split_train_dev(&cfg, &ds, None).unwrap();
        assert_eq!((t.len(), d.unwrap().len()), (4, 2));
        cfg.dev_size = 6;
        assert!(split_train_dev(&cfg, &ds, None).is_err());
    }
}
