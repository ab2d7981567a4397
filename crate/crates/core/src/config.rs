//! Run configuration as a flat `key = value` file.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors.
//! Empty values clear optional paths.
//!
//! | key | default |
//! |-----|---------|
//! | `seed` | 7 |
//! | `word_dim`, `ctx_dim`, `hidden`, `attn_hidden`, `answer_dim` | 64 |
//! | `context_layers` | 2 |
//! | `question_layers` | 3 |
//! | `oov_mode` | `hash_bucket` (`zero`) |
//! | `num_hash_buckets` | 64 |
//! | `separate_question_table` | false |
//! | `pretrained_vectors` | unset |
//! | `dropout` | 0 |
//! | `relational_mode` | `full` |
//! | `dictionary_mode` | false |
//! | `retrieval_corpus` | unset |
//! | `top_k` | 10 |
//! | `optimizer` | `adamax` |
//! | `lr` | 0.002 |
//! | `weight_decay` | 0 |
//! | `batch_size` | 16 |
//! | `epochs` | 30 |
//! | `tau` | 0.5 |
//! | `metric_lowercase` | true |
//! | `metric_strip_punct` | false |
//! | `train_data`, `dev_data` | unset |
//! | `dev_size` | 0 (hold out the last N training samples when no dev file) |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};

use crate::embeddings::OovMode;
use crate::encoders::EncoderDims;
use crate::error::{Error, Result};
use crate::metrics::MetricsConfig;
use crate::relate::RelationalMode;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub word_dim: usize,
    pub ctx_dim: usize,
    pub hidden: usize,
    pub attn_hidden: usize,
    pub answer_dim: usize,
    pub context_layers: usize,
    pub question_layers: usize,
    pub oov_mode: OovMode,
    pub num_hash_buckets: usize,
    pub separate_question_table: bool,
    pub pretrained_vectors: Option<PathBuf>,
    pub dropout: f64,
    pub relational_mode: RelationalMode,
    pub dictionary_mode: bool,
    pub retrieval_corpus: Option<PathBuf>,
    pub top_k: usize,
    pub optimizer: String,
    pub lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub tau: f64,
    pub metric_lowercase: bool,
    pub metric_strip_punct: bool,
    pub train_data: Option<PathBuf>,
    pub dev_data: Option<PathBuf>,
    pub dev_size: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            word_dim: 64,
            ctx_dim: 64,
            hidden: 64,
            attn_hidden: 64,
            answer_dim: 64,
            context_layers: 2,
            question_layers: 3,
            oov_mode: OovMode::HashBucket,
            num_hash_buckets: 64,
            separate_question_table: false,
            pretrained_vectors: None,
            dropout: 0.0,
            relational_mode: RelationalMode::Full,
            dictionary_mode: false,
            retrieval_corpus: None,
            top_k: 10,
            optimizer: "adamax".into(),
            lr: 2e-3,
            weight_decay: 0.0,
            batch_size: 16,
            epochs: 30,
            tau: 0.5,
            metric_lowercase: true,
            metric_strip_punct: false,
            train_data: None,
            dev_data: None,
            dev_size: 0,
        }
    }
}

/// Keys that change what a checkpoint's parameters mean. Only these feed the
/// config hash, so training-schedule and path changes do not invalidate a model.
const MODEL_KEYS: &[&str] = &[
    "word_dim",
    "ctx_dim",
    "hidden",
    "attn_hidden",
    "answer_dim",
    "context_layers",
    "question_layers",
    "oov_mode",
    "num_hash_buckets",
    "separate_question_table",
    "pretrained_vectors",
    "relational_mode",
    "dictionary_mode",
    "retrieval_corpus",
    "top_k",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("bad value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean `{value}` for `{key}`"))),
    }
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "word_dim" => self.word_dim = parse(key, v)?,
            "ctx_dim" => self.ctx_dim = parse(key, v)?,
            "hidden" => self.hidden = parse(key, v)?,
            "attn_hidden" => self.attn_hidden = parse(key, v)?,
            "answer_dim" => self.answer_dim = parse(key, v)?,
            "context_layers" => self.context_layers = parse(key, v)?,
            "question_layers" => self.question_layers = parse(key, v)?,
            "oov_mode" => self.oov_mode = v.parse()?,
            "num_hash_buckets" => self.num_hash_buckets = parse(key, v)?,
            "separate_question_table" => self.separate_question_table = parse_bool(key, v)?,
            "pretrained_vectors" => self.pretrained_vectors = opt_path(v),
            "dropout" => self.dropout = parse(key, v)?,
            "relational_mode" => self.relational_mode = v.parse()?,
            "dictionary_mode" => self.dictionary_mode = parse_bool(key, v)?,
            "retrieval_corpus" => self.retrieval_corpus = opt_path(v),
            "top_k" => self.top_k = parse(key, v)?,
            "optimizer" => self.optimizer = v.to_string(),
            "lr" => self.lr = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "epochs" => self.epochs = parse(key, v)?,
            "tau" => self.tau = parse(key, v)?,
            "metric_lowercase" => self.metric_lowercase = parse_bool(key, v)?,
            "metric_strip_punct" => self.metric_strip_punct = parse_bool(key, v)?,
            "train_data" => self.train_data = opt_path(v),
            "dev_data" => self.dev_data = opt_path(v),
            "dev_size" => self.dev_size = parse(key, v)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("seed", self.seed.to_string()),
            ("word_dim", self.word_dim.to_string()),
            ("ctx_dim", self.ctx_dim.to_string()),
            ("hidden", self.hidden.to_string()),
            ("attn_hidden", self.attn_hidden.to_string()),
            ("answer_dim", self.answer_dim.to_string()),
            ("context_layers", self.context_layers.to_string()),
            ("question_layers", self.question_layers.to_string()),
            ("oov_mode", self.oov_mode.as_str().to_string()),
            ("num_hash_buckets", self.num_hash_buckets.to_string()),
            ("separate_question_table", self.separate_question_table.to_string()),
            ("pretrained_vectors", show_path(&self.pretrained_vectors)),
            ("dropout", self.dropout.to_string()),
            ("relational_mode", self.relational_mode.as_str().to_string()),
            ("dictionary_mode", self.dictionary_mode.to_string()),
            ("retrieval_corpus", show_path(&self.retrieval_corpus)),
            ("top_k", self.top_k.to_string()),
            ("optimizer", self.optimizer.clone()),
            ("lr", self.lr.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("epochs", self.epochs.to_string()),
            ("tau", self.tau.to_string()),
            ("metric_lowercase", self.metric_lowercase.to_string()),
            ("metric_strip_punct", self.metric_strip_punct.to_string()),
            ("train_data", show_path(&self.train_data)),
            ("dev_data", show_path(&self.dev_data)),
            ("dev_size", self.dev_size.to_string()),
        ]
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn parse_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(k, v).map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        self.validate()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder_dims().validate()?;
        if self.answer_dim == 0 {
            return Err(Error::Config("answer_dim must be positive".into()));
        }
        // lr = 0 is accepted so a frozen run can be checked.
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be finite and non-negative, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout must be in [0, 1), got {}", self.dropout)));
        }
        if self.optimizer != "adamax" {
            return Err(Error::Config(format!("unsupported optimizer `{}` (only adamax)", self.optimizer)));
        }
        if self.batch_size == 0 || self.top_k == 0 || self.num_hash_buckets == 0 {
            return Err(Error::Config("batch_size, top_k and num_hash_buckets must be positive".into()));
        }
        self.metrics().validate()
    }

    pub fn encoder_dims(&self) -> EncoderDims {
        EncoderDims {
            word_dim: self.word_dim,
            ctx_dim: self.ctx_dim,
            hidden: self.hidden,
            attn_hidden: self.attn_hidden,
            context_layers: self.context_layers,
            question_layers: self.question_layers,
        }
    }

    pub fn metrics(&self) -> MetricsConfig {
        MetricsConfig { tau: self.tau, lowercase: self.metric_lowercase, strip_punct: self.metric_strip_punct }
    }

    /// Hex SHA-256 of the model-defining keys.
    pub fn model_hash(&self) -> String {
        let mut h = Sha256::new();
        for (k, v) in self.entries() {
            if MODEL_KEYS.contains(&k) {
                h.update(format!("{k}={v}\n").as_bytes());
            }
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Small dimensions for gradient checks and fast tests.
    pub fn toy() -> Self {
        Self {
            word_dim: 4,
            ctx_dim: 4,
            hidden: 4,
            attn_hidden: 3,
            answer_dim: 4,
            context_layers: 1,
            question_layers: 2,
            num_hash_buckets: 4,
            ..Self::default()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.relational_mode = RelationalMode::None;
        cfg.train_data = Some("data/train.jsonl".into());
        cfg.lr = 0.01;
        let back = RunConfig::parse_text(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn comments_and_errors() {
        let cfg = RunConfig::parse_text("# header\nepochs = 3 # short\n\nseed=11\n").unwrap();
        assert_eq!((cfg.epochs, cfg.seed), (3, 11));
        assert!(RunConfig::parse_text("bogus = 1").is_err());
        assert!(RunConfig::parse_text("epochs").is_err());
        assert!(RunConfig::parse_text("hidden = 3").is_err());
        assert!(RunConfig::parse_text("lr = -1").is_err());
        assert!(RunConfig::parse_text("relational_mode = half").is_err());
    }

    #[test]
    fn hash_tracks_model_keys_only() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.epochs = 1;
        b.seed = 99;
        assert_eq!(a.model_hash(), b.model_hash());
        b.hidden = 32;
        assert_ne!(a.model_hash(), b.model_hash());
    }
}
