//! Single-file checkpoint container.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "STQACKPT"
//! 8       4     format version, u32 little-endian
//! 12      8     header length H, u64 little-endian
//! 20      H     UTF-8 JSON header (see `Header`)
//! 20+H    ...   parameter tensors in header order, row-major f64 LE
//!               then, if the header has an optimizer, every Adamax first
//!               moment followed by every infinity norm, same order
//! ```
//!
//! The config travels as its `key = value` text, so a checkpoint carries
//! everything needed to rebuild the model without the original files.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::embeddings::WordLookup;
use crate::error::{Error, Result};
use crate::model::{Model, Vocabulary};
use crate::nn::{Adamax, Matrix};

pub const MAGIC: &[u8; 8] = b"STQACKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    rows: usize,
    cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct OptimizerEntry {
    step: u64,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
}

/// Position of a ChaCha8 stream: 32-byte seed, stream id and word position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    /// u128 does not survive JSON numbers, so it is kept as a decimal string.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let pos: u128 = self.word_pos.parse().map_err(|_| Error::Checkpoint(format!("bad rng word position `{}`", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    config: String,
    config_hash: String,
    epoch: usize,
    rng: RngState,
    vocab: Vec<String>,
    question_vocab: Option<Vec<String>>,
    frozen: Vec<String>,
    tensors: Vec<TensorEntry>,
    optimizer: Option<OptimizerEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub config_hash: String,
    pub epoch: usize,
    pub rng: RngState,
    pub vocab: Vec<String>,
    pub question_vocab: Option<Vec<String>>,
    pub frozen: Vec<String>,
    pub tensors: Vec<(String, Matrix)>,
    pub optimizer: Option<Adamax>,
}

impl Checkpoint {
    pub fn from_model(model: &Model, epoch: usize, rng: &ChaCha8Rng, optimizer: Option<&Adamax>) -> Self {
        Self {
            config: model.config.clone(),
            config_hash: model.config.model_hash(),
            epoch,
            rng: RngState::capture(rng),
            vocab: model.vocab.words.words().to_vec(),
            question_vocab: model.vocab.question_words.as_ref().map(|q| q.words().to_vec()),
            frozen: model.frozen.iter().map(|&id| model.store.name(id).to_string()).collect(),
            tensors: model.store.iter().map(|(_, p)| (p.name.clone(), p.value.clone())).collect(),
            optimizer: optimizer.cloned(),
        }
    }

    /// Errors with `ConfigMismatch` when `cfg` hashes differently, unless `force`.
    pub fn check_config(&self, cfg: &RunConfig, force: bool) -> Result<()> {
        let found = cfg.model_hash();
        if found != self.config_hash && !force {
            return Err(Error::ConfigMismatch { expected: self.config_hash.clone(), found });
        }
        Ok(())
    }

    /// Rebuilds the model under the stored config.
    pub fn to_model(&self) -> Result<Model> {
        self.to_model_with(&self.config)
    }

    /// Rebuilds the model under `cfg`, which must produce the same tensor
    /// layout. Callers check the hash first with [`Checkpoint::check_config`].
    pub fn to_model_with(&self, cfg: &RunConfig) -> Result<Model> {
        let lookup = |w: &[String]| WordLookup::new(w.to_vec(), cfg.word_dim, cfg.oov_mode, cfg.num_hash_buckets);
        let vocab = Vocabulary { words: lookup(&self.vocab), question_words: self.question_vocab.as_deref().map(lookup) };
        let mut model = Model::skeleton(cfg, vocab)?;
        if model.store.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!("model has {} tensors, checkpoint has {}", model.store.len(), self.tensors.len())));
        }
        for (id, (name, value)) in model.store.ids().collect::<Vec<_>>().into_iter().zip(&self.tensors) {
            if model.store.name(id) != name || model.store.get(id).shape() != value.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{name}` {:?} does not match model tensor `{}` {:?}",
                    value.shape(),
                    model.store.name(id),
                    model.store.get(id).shape()
                )));
            }
            *model.store.get_mut(id) = value.clone();
        }
        model.frozen = self
            .frozen
            .iter()
            .map(|n| model.store.id(n).ok_or_else(|| Error::Checkpoint(format!("unknown frozen tensor `{n}`"))))
            .collect::<Result<_>>()?;
        Ok(model)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: self.config.to_text(),
            config_hash: self.config_hash.clone(),
            epoch: self.epoch,
            rng: self.rng.clone(),
            vocab: self.vocab.clone(),
            question_vocab: self.question_vocab.clone(),
            frozen: self.frozen.clone(),
            tensors: self.tensors.iter().map(|(n, m)| TensorEntry { name: n.clone(), rows: m.rows(), cols: m.cols() }).collect(),
            optimizer: self.optimizer.as_ref().map(|o| OptimizerEntry {
                step: o.step,
                lr: o.lr,
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
                weight_decay: o.weight_decay,
            }),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + json.len() + 8 * self.tensors.iter().map(|(_, m)| m.len()).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut put = |m: &Matrix| {
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        };
        for (_, m) in &self.tensors {
            put(m);
        }
        if let Some(o) = &self.optimizer {
            o.first_moment.iter().chain(&o.inf_norm).for_each(&mut put);
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..).filter(|b| b.len() >= hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(&body[..hlen])?;
        let mut data = &body[hlen..];
        let mut take = |rows: usize, cols: usize| -> Result<Matrix> {
            let n = rows * cols * 8;
            if data.len() < n {
                return Err(bad("truncated tensor data"));
            }
            let vals = data[..n].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            data = &data[n..];
            Ok(Matrix::from_vec(rows, cols, vals))
        };
        let tensors = header.tensors.iter().map(|t| Ok((t.name.clone(), take(t.rows, t.cols)?))).collect::<Result<Vec<_>>>()?;
        let optimizer = match &header.optimizer {
            Some(o) => {
                let m = header.tensors.iter().map(|t| take(t.rows, t.cols)).collect::<Result<Vec<_>>>()?;
                let u = header.tensors.iter().map(|t| take(t.rows, t.cols)).collect::<Result<Vec<_>>>()?;
                Some(Adamax {
                    lr: o.lr,
                    beta1: o.beta1,
                    beta2: o.beta2,
                    eps: o.eps,
                    weight_decay: o.weight_decay,
                    step: o.step,
                    first_moment: m,
                    inf_norm: u,
                })
            }
            None => None,
        };
        if !data.is_empty() {
            return Err(bad("trailing bytes after tensor data"));
        }
        let config = RunConfig::parse_text(&header.config)?;
        Ok(Self {
            config,
            config_hash: header.config_hash,
            epoch: header.epoch,
            rng: header.rng,
            vocab: header.vocab,
            question_vocab: header.question_vocab,
            frozen: header.frozen,
            tensors,
            optimizer,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}
