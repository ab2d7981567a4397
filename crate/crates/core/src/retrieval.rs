//! BM25 lookup of answers from a corpus of (question, answer) pairs.
//!
//! Documents are the stored questions. Scoring uses `k1 = 1.2`, `b = 0.75`
//! and `idf = ln(1 + (N - df + 0.5) / (df + 0.5))`, summed over the distinct
//! query terms. Text is lowercased and split on anything that is not
//! alphanumeric.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::error::{Error, Result};
use crate::normalize::normalize_answer;

pub const K1: f64 = 1.2;
pub const B: f64 = 0.75;
pub const DEFAULT_TOP_K: usize = 10;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
}

pub fn index_terms(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()).map(str::to_lowercase).collect()
}

#[derive(Clone, Debug)]
pub struct RetrievalIndex {
    answers: Vec<String>,
    term_freqs: Vec<HashMap<String, usize>>,
    doc_lens: Vec<usize>,
    doc_freq: HashMap<String, usize>,
    avg_len: f64,
}

pub fn build_index(pairs: &[QaPair]) -> Result<RetrievalIndex> {
    if pairs.is_empty() {
        return Err(Error::Empty("retrieval corpus has no pairs"));
    }
    let mut term_freqs = Vec::with_capacity(pairs.len());
    let mut doc_lens = Vec::with_capacity(pairs.len());
    let mut doc_freq: HashMap<String, usize> = HashMap::new();
    for p in pairs {
        let terms = index_terms(&p.question);
        let mut tf: HashMap<String, usize> = HashMap::new();
        for t in &terms {
            *tf.entry(t.clone()).or_default() += 1;
        }
        for t in tf.keys() {
            *doc_freq.entry(t.clone()).or_default() += 1;
        }
        doc_lens.push(terms.len());
        term_freqs.push(tf);
    }
    let avg_len = doc_lens.iter().sum::<usize>() as f64 / pairs.len() as f64;
    Ok(RetrievalIndex { answers: pairs.iter().map(|p| p.answer.clone()).collect(), term_freqs, doc_lens, doc_freq, avg_len })
}

impl RetrievalIndex {
    pub fn num_docs(&self) -> usize {
        self.answers.len()
    }

    pub fn doc_freq(&self, term: &str) -> usize {
        self.doc_freq.get(&term.to_lowercase()).copied().unwrap_or(0)
    }

    pub fn idf(&self, term: &str) -> f64 {
        let n = self.num_docs() as f64;
        let df = self.doc_freq(term) as f64;
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// BM25 score of every document, in insertion order.
    pub fn scores(&self, query: &str) -> Vec<f64> {
        let mut seen = HashSet::new();
        let terms: Vec<String> = index_terms(query).into_iter().filter(|t| seen.insert(t.clone())).collect();
        let idfs: Vec<f64> = terms.iter().map(|t| self.idf(t)).collect();
        let avg = if self.avg_len > 0.0 { self.avg_len } else { 1.0 };
        (0..self.num_docs())
            .map(|d| {
                let norm = K1 * (1.0 - B + B * self.doc_lens[d] as f64 / avg);
                terms
                    .iter()
                    .zip(&idfs)
                    .map(|(t, idf)| match self.term_freqs[d].get(t) {
                        Some(&tf) => idf * tf as f64 * (K1 + 1.0) / (tf as f64 + norm),
                        None => 0.0,
                    })
                    .sum()
            })
            .collect()
    }

    /// Up to `k` distinct answers from documents with a positive score,
    /// best first, ties in insertion order.
    pub fn retrieve(&self, query: &str, k: usize) -> Vec<String> {
        let scores = self.scores(query);
        let mut ranked: Vec<usize> = (0..scores.len()).filter(|&d| scores[d] > 0.0).collect();
        ranked.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
        let mut seen = HashSet::new();
        let mut out = Vec::new();
        for d in ranked {
            if out.len() == k {
                break;
            }
            let norm = normalize_answer(&self.answers[d]);
            if !norm.is_empty() && seen.insert(norm) {
                out.push(self.answers[d].clone());
            }
        }
        out
    }
}

pub fn retrieve(index: &RetrievalIndex, query: &str, k: usize) -> Vec<String> {
    index.retrieve(query, k)
}

pub fn load_qa_pairs(path: impl AsRef<Path>) -> Result<Vec<QaPair>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qa_pairs(&text)
}

pub fn parse_qa_pairs(text: &str) -> Result<Vec<QaPair>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: QaPair = serde_json::from_str(line)
            .map_err(|e| Error::Record { line: i + 1, field: "pair".into(), message: e.to_string() })?;
        if pair.question.trim().is_empty() || pair.answer.trim().is_empty() {
            return Err(Error::Record { line: i + 1, field: "pair".into(), message: "question and answer must be non-empty".into() });
        }
        out.push(pair);
    }
    Ok(out)
}

/// One pair per distinct normalized gold answer of every sample.
pub fn qa_pairs_from_dataset(dataset: &Dataset) -> Vec<QaPair> {
    let mut out = Vec::new();
    for s in &dataset.samples {
        let mut seen = HashSet::new();
        for a in &s.gold_answers {
            if !s.question.trim().is_empty() && !a.trim().is_empty() && seen.insert(normalize_answer(a)) {
                out.push(QaPair { question: s.question.clone(), answer: a.clone() });
            }
        }
    }
    out
}

pub fn write_qa_pairs(path: impl AsRef<Path>, pairs: &[QaPair]) -> Result<()> {
    let path = path.as_ref();
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for p in pairs {
        writeln!(f, "{}", serde_json::to_string(p)?).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}
