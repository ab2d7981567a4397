//! ANLS and VQA accuracy.
//!
//! `NL(a, b) = lev(a, b) / max(|a|, |b|)` in characters, with
//! `NL("", "") = 0`. A question scores `1 - NL` against its closest gold
//! answer when `NL < τ`, else 0. VQA accuracy is `min(#matching humans / 3, 1)`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{load_dataset, Dataset, Split};
use crate::error::{Error, Result};
use crate::normalize::normalize_with;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsConfig {
    pub tau: f64,
    pub lowercase: bool,
    pub strip_punct: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self { tau: 0.5, lowercase: true, strip_punct: false }
    }
}

impl MetricsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config(format!("tau must be in (0, 1], got {}", self.tau)));
        }
        Ok(())
    }

    pub fn normalize(&self, s: &str) -> String {
        normalize_with(s, self.lowercase, self.strip_punct)
    }
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn normalized_levenshtein(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 0.0;
    }
    levenshtein(a, b) as f64 / longest as f64
}

/// Per-question ANLS score against every gold answer.
pub fn anls_score(prediction: &str, gold: &[String], cfg: &MetricsConfig) -> f64 {
    let p = cfg.normalize(prediction);
    gold.iter()
        .map(|g| {
            let nl = normalized_levenshtein(&p, &cfg.normalize(g));
            if nl < cfg.tau {
                1.0 - nl
            } else {
                0.0
            }
        })
        .fold(0.0, f64::max)
}

pub fn vqa_score(prediction: &str, humans: &[String], cfg: &MetricsConfig) -> f64 {
    let p = cfg.normalize(prediction);
    let matches = humans.iter().filter(|h| cfg.normalize(h) == p).count();
    (matches as f64 / 3.0).min(1.0)
}

fn mean_over<F: Fn(&str, &[String]) -> f64>(predictions: &HashMap<String, String>, gold: &BTreeMap<String, Vec<String>>, score: F) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::Empty("no gold questions"));
    }
    let mut total = 0.0;
    for (id, answers) in gold {
        if answers.is_empty() {
            return Err(Error::invalid("answers", format!("sample `{id}` has no gold answers")));
        }
        let pred = predictions.get(id).map(String::as_str).unwrap_or("");
        total += score(pred, answers);
    }
    Ok(total / gold.len() as f64)
}

/// Mean ANLS over the gold questions; a missing prediction counts as "".
pub fn anls(predictions: &HashMap<String, String>, gold: &BTreeMap<String, Vec<String>>, cfg: &MetricsConfig) -> Result<f64> {
    cfg.validate()?;
    mean_over(predictions, gold, |p, g| anls_score(p, g, cfg))
}

pub fn vqa_accuracy(predictions: &HashMap<String, String>, gold: &BTreeMap<String, Vec<String>>, cfg: &MetricsConfig) -> Result<f64> {
    mean_over(predictions, gold, |p, g| vqa_score(p, g, cfg))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub sample_id: String,
    pub prediction: String,
    pub anls_score: f64,
    pub acc_score: f64,
    pub missing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubsetScore {
    pub count: usize,
    pub anls: f64,
    pub vqa_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub anls: f64,
    pub vqa_accuracy: f64,
    pub num_samples: usize,
    pub num_missing: usize,
    /// Keyed by the part of the sample id before its first `-`.
    pub subsets: BTreeMap<String, SubsetScore>,
    pub per_sample: Vec<SampleScore>,
}

pub fn subset_key(sample_id: &str) -> &str {
    sample_id.split_once('-').map_or(sample_id, |(k, _)| k)
}

/// Scores `predictions` against every sample of `gold`, in dataset order.
pub fn evaluate_predictions(predictions: &HashMap<String, String>, gold: &Dataset, cfg: &MetricsConfig) -> Result<EvalReport> {
    cfg.validate()?;
    if gold.is_empty() {
        return Err(Error::Empty("gold dataset is empty"));
    }
    let mut per_sample = Vec::with_capacity(gold.len());
    let mut subsets: BTreeMap<String, (usize, f64, f64)> = BTreeMap::new();
    for s in &gold.samples {
        if s.gold_answers.is_empty() {
            return Err(Error::invalid("answers", format!("sample `{}` has no gold answers", s.sample_id)));
        }
        let missing = !predictions.contains_key(&s.sample_id);
        let pred = predictions.get(&s.sample_id).cloned().unwrap_or_default();
        let a = anls_score(&pred, &s.gold_answers, cfg);
        let v = vqa_score(&pred, &s.gold_answers, cfg);
        let entry = subsets.entry(subset_key(&s.sample_id).to_string()).or_default();
        entry.0 += 1;
        entry.1 += a;
        entry.2 += v;
        per_sample.push(SampleScore { sample_id: s.sample_id.clone(), prediction: pred, anls_score: a, acc_score: v, missing });
    }
    let n = per_sample.len() as f64;
    Ok(EvalReport {
        anls: per_sample.iter().map(|s| s.anls_score).sum::<f64>() / n,
        vqa_accuracy: per_sample.iter().map(|s| s.acc_score).sum::<f64>() / n,
        num_samples: per_sample.len(),
        num_missing: per_sample.iter().filter(|s| s.missing).count(),
        subsets: subsets
            .into_iter()
            .map(|(k, (c, a, v))| (k, SubsetScore { count: c, anls: a / c as f64, vqa_accuracy: v / c as f64 }))
            .collect(),
        per_sample,
    })
}

/// Reads `{"sample_id", "answer", ...}` lines. Later lines win on repeated ids.
pub fn read_predictions(path: impl AsRef<Path>) -> Result<HashMap<String, String>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value =
            serde_json::from_str(line).map_err(|e| Error::Record { line: i + 1, field: "prediction".into(), message: e.to_string() })?;
        let field = |name: &str| {
            v.get(name)
                .and_then(|x| x.as_str())
                .map(str::to_string)
                .ok_or_else(|| Error::Record { line: i + 1, field: name.into(), message: "missing or not a string".into() })
        };
        out.insert(field("sample_id")?, field("answer")?);
    }
    Ok(out)
}

pub fn evaluate(pred_file: impl AsRef<Path>, gold_file: impl AsRef<Path>, cfg: &MetricsConfig) -> Result<EvalReport> {
    let preds = read_predictions(pred_file)?;
    let (gold, _) = load_dataset(gold_file, Split::Dev)?;
    evaluate_predictions(&preds, &gold, cfg)
}

pub fn write_per_sample_csv(path: impl AsRef<Path>, report: &EvalReport) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let quote = |s: &str| format!("\"{}\"", s.replace('"', "\"\""));
    let mut body = String::from("sample_id,prediction,anls,accuracy,missing\n");
    for s in &report.per_sample {
        body.push_str(&format!("{},{},{},{},{}\n", quote(&s.sample_id), quote(&s.prediction), s.anls_score, s.acc_score, s.missing));
    }
    f.write_all(body.as_bytes()).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strs(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn levenshtein_cases() {
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("a", "a"), 0);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("ab", ""), 2);
    }

    #[test]
    fn anls_cases() {
        let cfg = MetricsConfig::default();
        assert_eq!(anls_score("Stop", &strs(&["stop"]), &cfg), 1.0);
        assert!((anls_score("helo", &strs(&["hello"]), &cfg) - 0.8).abs() < 1e-12);
        // one substitution over two characters sits exactly on the threshold
        assert_eq!(normalized_levenshtein("ab", "ad"), 0.5);
        assert_eq!(anls_score("ab", &strs(&["ad"]), &cfg), 0.0);
        assert_eq!(anls_score("", &strs(&[""]), &cfg), 1.0);
        assert_eq!(anls_score("helo", &strs(&["xyz", "hello"]), &cfg), anls_score("helo", &strs(&["hello", "xyz"]), &cfg));
    }

    #[test]
    fn vqa_cases() {
        let cfg = MetricsConfig::default();
        let humans = strs(&["red", "red", "Red", "blue"]);
        assert_eq!(vqa_score("red", &humans, &cfg), 1.0);
        assert_eq!(vqa_score("blue", &humans, &cfg), 1.0 / 3.0);
        assert_eq!(vqa_score("green", &humans, &cfg), 0.0);
    }

    #[test]
    fn aggregate_and_missing() {
        let cfg = MetricsConfig::default();
        let mut gold = BTreeMap::new();
        gold.insert("a-1".to_string(), strs(&["yes"]));
        gold.insert("b-1".to_string(), strs(&["stop"]));
        let mut preds = HashMap::new();
        preds.insert("a-1".to_string(), "yes".to_string());
        assert_eq!(anls(&preds, &gold, &cfg).unwrap(), 0.5);
        assert_eq!(vqa_accuracy(&preds, &gold, &cfg).unwrap(), 1.0 / 6.0);
        assert!(anls(&preds, &BTreeMap::new(), &cfg).is_err());
        assert!(anls(&preds, &gold, &MetricsConfig { tau: 0.0, ..cfg }).is_err());
    }

    #[test]
    fn subset_keys() {
        assert_eq!(subset_key("b-00012"), "b");
        assert_eq!(subset_key("plain"), "plain");
    }
}
