//! `stqa` command line.
//!
//! Config resolution: defaults, then `--config FILE`, then `--set key=value`
//! pairs, then the dedicated flags. Failures print
//! `{"error": "<code>", "message": "..."}` on stderr and exit with 1
//! (2 for usage errors, 3 for a failing gradient check).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use stqa::checkpoint::Checkpoint;
use stqa::config::RunConfig;
use stqa::corpus::{generate_synthetic, load_dataset, scan_dataset, write_dataset, Split, SyntheticConfig};
use stqa::gradcheck::{gradcheck, GradcheckOptions};
use stqa::metrics::{evaluate, write_per_sample_csv};
use stqa::retrieval::{build_index, load_qa_pairs, qa_pairs_from_dataset, write_qa_pairs, RetrievalIndex};
use stqa::train::{predict_dataset, prepare_dataset, split_train_dev, train_with, write_predictions};
use stqa::{Error, Result};

#[derive(Parser)]
#[command(name = "stqa", version, about = "Scene-text question answering: train, predict and evaluate")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// full | semantic_only | positional_only | weighted_sum | none
    #[arg(long, global = true)]
    relational_mode: Option<String>,
    #[arg(long, global = true)]
    dictionary_mode: bool,
    /// Number of retrieved additional answers.
    #[arg(long, global = true)]
    topk: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a dataset file and optionally write the cleaned records.
    Prepare {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "train")]
        split: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic corpus.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 200)]
        num_samples: usize,
        #[arg(long, default_value_t = 50)]
        vocab_size: usize,
    },
    /// Train and write the best checkpoint.
    Train {
        /// Training data; falls back to `train_data` in the config.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Dev data; falls back to `dev_data`, then to `dev_size` held-out samples.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Also write the final-epoch checkpoint here.
        #[arg(long)]
        last: Option<PathBuf>,
        /// Per-epoch JSON lines.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Write one prediction per sample as JSON lines.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Accept a config whose model hash differs from the checkpoint's.
        #[arg(long)]
        force: bool,
    },
    /// Score a prediction file against gold answers.
    Eval {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Per-sample CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-difference check of every parameter gradient at toy dims.
    Gradcheck {
        /// Number of consecutive seeds starting at `--seed` (default 0).
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Build a retrieval corpus of (question, answer) pairs from a dataset.
    RetrieveBuild {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

impl Common {
    /// Applies file, `--set` pairs and flags on top of `base`.
    fn resolve(&self, mut cfg: RunConfig) -> Result<RunConfig> {
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            cfg.apply_text(&text)?;
        }
        for kv in &self.overrides {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k, v)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(m) = &self.relational_mode {
            cfg.relational_mode = m.parse()?;
        }
        if self.dictionary_mode {
            cfg.dictionary_mode = true;
        }
        if let Some(k) = self.topk {
            cfg.top_k = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn touched(&self) -> bool {
        self.config.is_some() || !self.overrides.is_empty() || self.seed.is_some() || self.relational_mode.is_some() || self.dictionary_mode || self.topk.is_some()
    }
}

fn retrieval_index(cfg: &RunConfig) -> Result<Option<RetrievalIndex>> {
    match (&cfg.retrieval_corpus, cfg.dictionary_mode) {
        (Some(path), false) => Ok(Some(build_index(&load_qa_pairs(path)?)?)),
        _ => Ok(None),
    }
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json value serializes"));
}

fn same_file(a: &Path, b: &Path) -> bool {
    a == b || matches!((fs::canonicalize(a), fs::canonicalize(b)), (Ok(x), Ok(y)) if x == y)
}

fn run(cli: Cli) -> Result<ExitCode> {
    let common = &cli.common;
    match &cli.command {
        Command::Prepare { data, split, out } => {
            let report = scan_dataset(data, split.parse::<Split>()?)?;
            let errors: Vec<_> = report.errors.iter().map(|e| json!({"error": e.code(), "message": e.to_string()})).collect();
            if let Some(out) = out {
                if same_file(data, out) {
                    return Err(Error::Invalid { field: "out".into(), message: "refusing to overwrite the input dataset".into() });
                }
                write_dataset(out, &report.dataset)?;
            }
            print_json(&json!({"stats": report.stats, "errors": errors}));
            Ok(if report.errors.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Synth { out, num_samples, vocab_size } => {
            let cfg = common.resolve(RunConfig::default())?;
            let ds = generate_synthetic(SyntheticConfig { num_samples: *num_samples, vocab_size: *vocab_size, seed: cfg.seed })?;
            write_dataset(out, &ds)?;
            print_json(&json!({"samples": ds.len(), "seed": cfg.seed, "out": out}));
            Ok(ExitCode::SUCCESS)
        }
        Command::Train { data, dev, out, last, log } => {
            let cfg = common.resolve(RunConfig::default())?;
            let train_path = data.clone().or_else(|| cfg.train_data.clone()).ok_or_else(|| Error::Config("no training data: pass --data or set train_data".into()))?;
            let (train_ds, _) = load_dataset(&train_path, Split::Train)?;
            let dev_path = dev.clone().or_else(|| cfg.dev_data.clone());
            let dev_ds = dev_path.map(|p| load_dataset(p, Split::Dev).map(|(d, _)| d)).transpose()?;
            let (train_ds, dev_ds) = split_train_dev(&cfg, &train_ds, dev_ds.as_ref())?;
            let index = retrieval_index(&cfg)?;
            let mut lines = String::new();
            let outcome = train_with(&cfg, &train_ds, dev_ds.as_ref(), index.as_ref(), |e| {
                let line = e.to_json_line();
                eprintln!("{line}");
                lines.push_str(&line);
                lines.push('\n');
            })?;
            outcome.best.save(out)?;
            if let Some(p) = last {
                outcome.last.save(p)?;
            }
            if let Some(p) = log {
                fs::write(p, &lines).map_err(|e| Error::Io { path: p.clone(), source: e })?;
            }
            print_json(&json!({"best_epoch": outcome.best_epoch, "config_hash": cfg.model_hash(), "checkpoint": out}));
            Ok(ExitCode::SUCCESS)
        }
        Command::Predict { checkpoint, data, out, force } => {
            let ck = Checkpoint::load(checkpoint)?;
            let cfg = if common.touched() { common.resolve(ck.config.clone())? } else { ck.config.clone() };
            ck.check_config(&cfg, *force)?;
            let model = ck.to_model_with(&cfg)?;
            let (ds, _) = load_dataset(data, Split::Test)?;
            let preps = prepare_dataset(&ds, &cfg, retrieval_index(&cfg)?.as_ref())?;
            let preds = predict_dataset(&model, &preps)?;
            write_predictions(out, &preds)?;
            print_json(&json!({"predictions": preds.len(), "out": out}));
            Ok(ExitCode::SUCCESS)
        }
        Command::Eval { data, predictions, out } => {
            let cfg = common.resolve(RunConfig::default())?;
            let report = evaluate(predictions, data, &cfg.metrics())?;
            if let Some(p) = out {
                write_per_sample_csv(p, &report)?;
            }
            print_json(&json!({
                "anls": report.anls,
                "vqa_accuracy": report.vqa_accuracy,
                "num_samples": report.num_samples,
                "num_missing": report.num_missing,
                "subsets": report.subsets,
            }));
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck { seeds } => {
            let cfg = common.resolve(RunConfig::toy())?;
            let first = common.seed.unwrap_or(0);
            let mut all_passed = true;
            let mut reports = Vec::new();
            for seed in first..first + seeds {
                let r = gradcheck(&cfg, seed, &GradcheckOptions::default())?;
                eprintln!(
                    "seed {seed}: {} max rel error {:.3e} ({})",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.max_rel_error,
                    r.worst_tensor
                );
                all_passed &= r.passed;
                reports.push(r);
            }
            print_json(&serde_json::to_value(&reports)?);
            Ok(if all_passed { ExitCode::SUCCESS } else { ExitCode::from(3) })
        }
        Command::RetrieveBuild { data, out } => {
            let (ds, _) = load_dataset(data, Split::Train)?;
            let pairs = qa_pairs_from_dataset(&ds);
            write_qa_pairs(out, &pairs)?;
            print_json(&json!({"pairs": pairs.len(), "out": out}));
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).format_timestamp(None).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprintln!("{}", json!({"error": "usage", "message": e.to_string().trim()}));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{}", json!({"error": e.code(), "message": e.to_string()}));
            ExitCode::from(1)
        }
    }
}
