//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;

use rand::Rng;
use stqa::corpus::{OcrToken, Quad, Sample, SceneObject};
use stqa::nn::Matrix;

/// Edit distance by the textbook recursion, memoized on (i, j).
pub fn lev_oracle(a: &str, b: &str) -> usize {
    fn go(a: &[char], b: &[char], i: usize, j: usize, memo: &mut HashMap<(usize, usize), usize>) -> usize {
        if i == 0 {
            return j;
        }
        if j == 0 {
            return i;
        }
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let sub = go(a, b, i - 1, j - 1, memo) + usize::from(a[i - 1] != b[j - 1]);
        let del = go(a, b, i - 1, j, memo) + 1;
        let ins = go(a, b, i, j - 1, memo) + 1;
        let v = sub.min(del).min(ins);
        memo.insert((i, j), v);
        v
    }
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    go(&a, &b, a.len(), b.len(), &mut HashMap::new())
}

/// Per-question ANLS for strings that need no normalization beyond lowercasing.
pub fn anls_oracle(pred: &str, gold: &[String], tau: f64) -> f64 {
    let p = pred.to_lowercase();
    let mut best: f64 = 0.0;
    for g in gold {
        let g = g.to_lowercase();
        let longest = p.chars().count().max(g.chars().count());
        let nl = if longest == 0 { 0.0 } else { lev_oracle(&p, &g) as f64 / longest as f64 };
        let s = if nl < tau { 1.0 - nl } else { 0.0 };
        best = best.max(s);
    }
    best
}

/// Random string of up to `max_len` characters, mixed case, occasionally non-ASCII.
pub fn random_word<R: Rng>(rng: &mut R, max_len: usize) -> String {
    const ALPHABET: &[char] = &['a', 'b', 'c', 'd', 'A', 'B', 'é', 'ß', 'x', 'y'];
    let len = rng.gen_range(0..=max_len);
    (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect()
}

pub type Rows = Vec<Vec<f64>>;

pub fn random_rows<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Rows {
    (0..rows).map(|_| (0..cols).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect()
}

/// Attention written out with plain loops:
/// `s_ij = Σ_k D_k ReLU(a_i U)_k ReLU(b_j U)_k`, row softmax, then `Σ_j α_ij c_j`.
pub fn attn_oracle(a: &Rows, b: &Rows, c: &Rows, u: &Rows, d: &[f64]) -> (Rows, Rows) {
    let proj = |x: &Vec<f64>| -> Vec<f64> {
        (0..d.len()).map(|k| x.iter().zip(u).map(|(xi, row)| xi * row[k]).sum::<f64>().max(0.0)).collect()
    };
    let pa: Rows = a.iter().map(proj).collect();
    let pb: Rows = b.iter().map(proj).collect();
    let mut weights = Vec::new();
    let mut out = Vec::new();
    for ai in &pa {
        let s: Vec<f64> = pb.iter().map(|bj| (0..d.len()).map(|k| ai[k] * d[k] * bj[k]).sum()).collect();
        let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let alpha: Vec<f64> = e.iter().map(|v| v / z).collect();
        let width = c[0].len();
        let mixed: Vec<f64> = (0..width).map(|col| alpha.iter().zip(c).map(|(w, cj)| w * cj[col]).sum()).collect();
        weights.push(alpha);
        out.push(mixed);
    }
    (weights, out)
}

/// Largest entrywise difference; infinite when the shapes disagree.
pub fn max_abs_diff(a: &Rows, m: &Matrix) -> f64 {
    if a.len() != m.rows() || a.iter().any(|r| r.len() != m.cols()) {
        return f64::INFINITY;
    }
    a.iter().enumerate().flat_map(|(i, r)| r.iter().enumerate().map(move |(j, v)| (v - m.get(i, j)).abs())).fold(0.0, f64::max)
}

pub fn matrix(rows: &Rows) -> Matrix {
    Matrix::from_rows(rows)
}

pub fn token(text: &str, cx: f64, cy: f64, h: f64) -> OcrToken {
    OcrToken { text: text.into(), quad: Quad::from_rect(cx - 15.0, cy - h / 2.0, 30.0, h) }
}

pub fn sample(id: &str, question: &str, answers: &[&str], tokens: Vec<OcrToken>, objects: Vec<SceneObject>) -> Sample {
    Sample {
        sample_id: id.into(),
        image_width: 1000.0,
        image_height: 1000.0,
        question: question.into(),
        gold_answers: answers.iter().map(|s| s.to_string()).collect(),
        ocr_tokens: tokens,
        objects,
        dictionary: None,
    }
}

/// Randomly placed tokens with distinct lowercase texts.
pub fn random_layout<R: Rng>(rng: &mut R, n: usize) -> Vec<OcrToken> {
    (0..n)
        .map(|i| token(&format!("w{i}"), rng.gen_range(20.0..980.0), rng.gen_range(20.0..980.0), rng.gen_range(8.0..40.0)))
        .collect()
}
