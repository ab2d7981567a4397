//! Answer scoring: candidate vectors, the three candidate pools, final
//! selection and the training loss.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::rnn::GruCellParams;
use crate::nn::{Graph, Matrix, ParamId, ParamStore, Var};
use crate::normalize::normalize_answer;
use crate::textprep::{AnswerCandidate, CandidateKind};

pub const PROB_FLOOR: f64 = 1e-7;
pub const PROB_CEIL: f64 = 1.0 - 1e-7;

/// One special-answer head: bilinear attention over the OCR candidate
/// vectors, then a logistic read-out.
#[derive(Clone, Debug)]
pub struct SpecialHead {
    pub w: ParamId,
    pub v: ParamId,
}

#[derive(Clone, Debug)]
pub struct AnswerScorer {
    pub fc_w: ParamId,
    pub fc_b: ParamId,
    pub w_a: ParamId,
    pub w_aa: ParamId,
    /// yes, no, unanswerable
    pub heads: [SpecialHead; 3],
    pub gru: GruCellParams,
    /// Stands in for the OCR candidate vectors when there are none.
    pub null_repr: ParamId,
    pub context_dim: usize,
    pub question_dim: usize,
    pub answer_dim: usize,
}

impl AnswerScorer {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, context_dim: usize, question_dim: usize, answer_dim: usize, rng: &mut R) -> Self {
        let bil = 1.0 / ((question_dim * answer_dim) as f64).sqrt().sqrt();
        let fc_scale = 1.0 / ((2 * context_dim) as f64).sqrt();
        let fc_w = store.add(format!("{prefix}.fc_w"), Matrix::random_uniform(2 * context_dim, answer_dim, fc_scale, rng));
        let fc_b = store.add(format!("{prefix}.fc_b"), Matrix::random_uniform(1, answer_dim, fc_scale, rng));
        let w_a = store.add(format!("{prefix}.w_a"), Matrix::random_uniform(question_dim, answer_dim, bil, rng));
        let w_aa = store.add(format!("{prefix}.w_aa"), Matrix::random_uniform(question_dim, answer_dim, bil, rng));
        let mut head = |name: &str, rng: &mut R| SpecialHead {
            w: store.add(format!("{prefix}.{name}.w"), Matrix::random_uniform(question_dim, answer_dim, bil, rng)),
            v: store.add(format!("{prefix}.{name}.v"), Matrix::random_uniform(1, answer_dim, 1.0 / (answer_dim as f64).sqrt(), rng)),
        };
        let heads = [head("yes", rng), head("no", rng), head("unanswerable", rng)];
        let gru = GruCellParams::new(store, &format!("{prefix}.gru"), answer_dim, question_dim, rng);
        let null_repr = store.add(format!("{prefix}.null"), Matrix::random_uniform(1, answer_dim, 0.1, rng));
        Self { fc_w, fc_b, w_a, w_aa, heads, gru, null_repr, context_dim, question_dim, answer_dim }
    }

    /// `ReLU([ū; ū̂] W + b)` where `pool` (`c x m`) averages each
    /// candidate's context rows.
    pub fn candidate_reprs(&self, g: &mut Graph, pool: &Matrix, u: Var, u_hat: Var) -> Var {
        let p = g.constant(pool.clone());
        let both = g.concat_cols(&[u, u_hat]);
        let pooled = g.matmul(p, both);
        self.fc(g, pooled)
    }

    fn fc(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.fc_w);
        let b = g.param(self.fc_b);
        let h = g.matmul(x, w);
        let h = g.add_row(h, b);
        g.relu(h)
    }

    fn bilinear_softmax(g: &mut Graph, u_q: Var, w: Var, reprs: Var) -> Var {
        let proj = g.matmul(u_q, w);
        let scores = g.matmul_t(proj, reprs);
        g.softmax_rows(scores)
    }

    /// `softmax_i(u^Q W_A u_i^A)` as a `1 x c` row.
    pub fn match_ocr(&self, g: &mut Graph, u_q: Var, reprs: Var) -> Var {
        let w = g.param(self.w_a);
        Self::bilinear_softmax(g, u_q, w, reprs)
    }

    /// `t^Q = GRU(u^Q, Σ P_i^A u_i^A)` followed by `softmax_j(t^Q W_AA u_j^AA)`.
    pub fn reason_additional(&self, g: &mut Graph, u_q: Var, p_ocr: Var, ocr_reprs: Var, add_reprs: Var) -> Var {
        let evidence = g.matmul(p_ocr, ocr_reprs);
        let t_q = self.gru.step(g, u_q, evidence);
        let w = g.param(self.w_aa);
        Self::bilinear_softmax(g, t_q, w, add_reprs)
    }

    /// `[P_Y, P_N, P_U]` as a `1 x 3` row.
    pub fn special_heads(&self, g: &mut Graph, u_q: Var, ocr_reprs: Var) -> Var {
        let mut outs = Vec::with_capacity(3);
        for head in &self.heads {
            let w = g.param(head.w);
            let att = Self::bilinear_softmax(g, u_q, w, ocr_reprs);
            let summary = g.matmul(att, ocr_reprs);
            let v = g.param(head.v);
            let logit = g.matmul_t(summary, v);
            outs.push(g.sigmoid(logit));
        }
        g.concat_cols(&outs)
    }

    pub fn null_reprs(&self, g: &mut Graph) -> Var {
        g.param(self.null_repr)
    }
}

/// Averaging matrix over context positions, one row per candidate.
pub fn span_pooling(positions: &[&[usize]], context_len: usize) -> Matrix {
    let mut m = Matrix::zeros(positions.len(), context_len);
    for (r, ps) in positions.iter().enumerate() {
        for &p in ps.iter() {
            m.set(r, p, 1.0 / ps.len() as f64);
        }
    }
    m
}

/// `ReLU(W^T [u; û] + b)` with `fc_w` of shape `2 d_u x d_a`.
pub fn candidate_repr(u_span: &[f64], u_hat_span: &[f64], fc_w: &Matrix, fc_b: &[f64]) -> Result<Vec<f64>> {
    let x: Vec<f64> = u_span.iter().chain(u_hat_span).copied().collect();
    if x.len() != fc_w.rows() || fc_b.len() != fc_w.cols() {
        return Err(Error::Shape(format!("FC is {:?}, input has {} and bias {} entries", fc_w.shape(), x.len(), fc_b.len())));
    }
    let h = Matrix::row_vector(&x).matmul(fc_w);
    Ok(h.data().iter().zip(fc_b).map(|(a, b)| (a + b).max(0.0)).collect())
}

/// `softmax_i(u^Q W u_i)` over the rows of `candidates`.
pub fn match_ocr(u_q: &[f64], candidates: &Matrix, w_a: &Matrix) -> Result<Vec<f64>> {
    if candidates.rows() == 0 {
        return Err(Error::Empty("no OCR candidates to match"));
    }
    if u_q.len() != w_a.rows() || candidates.cols() != w_a.cols() {
        return Err(Error::Shape(format!("W is {:?}, question {} and candidates {} wide", w_a.shape(), u_q.len(), candidates.cols())));
    }
    let proj = Matrix::row_vector(u_q).matmul(w_a);
    Ok(proj.matmul_t(candidates).softmax_rows().into_vec())
}

/// Which pool a selected answer came from plus its index inside the pool.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Selection {
    pub kind: CandidateKind,
    pub index: usize,
    pub score: f64,
}

/// Argmax over OCR spans, then additional texts, then yes/no/unanswerable.
/// Only a strictly larger score displaces an earlier one.
pub fn select_answer(p_ocr: &[f64], p_add: &[f64], special: Option<[f64; 3]>) -> Result<Selection> {
    let mut ordered: Vec<(CandidateKind, usize, f64)> = Vec::with_capacity(p_ocr.len() + p_add.len() + 3);
    ordered.extend(p_ocr.iter().enumerate().map(|(i, &s)| (CandidateKind::OcrSpan, i, s)));
    ordered.extend(p_add.iter().enumerate().map(|(i, &s)| (CandidateKind::Additional, i, s)));
    if let Some([y, n, u]) = special {
        ordered.extend([(CandidateKind::Yes, 0, y), (CandidateKind::No, 0, n), (CandidateKind::Unanswerable, 0, u)]);
    }
    let mut best: Option<Selection> = None;
    for (kind, index, score) in ordered {
        if score.is_nan() {
            continue;
        }
        if best.map_or(true, |b| score > b.score) {
            best = Some(Selection { kind, index, score });
        }
    }
    best.ok_or(Error::Empty("every candidate pool is empty"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct Labels {
    pub ocr: Vec<f64>,
    pub additional: Vec<f64>,
    pub special: [f64; 3],
    /// Some OCR or additional candidate, or a special answer, is positive.
    pub reachable: bool,
}

pub fn make_labels(gold_answers: &[String], ocr_texts: &[&str], additional_texts: &[&str]) -> Result<Labels> {
    if gold_answers.is_empty() {
        return Err(Error::Empty("training sample has no gold answers"));
    }
    let gold: Vec<String> = gold_answers.iter().map(|a| normalize_answer(a)).collect();
    let label = |t: &&str| if gold.contains(&normalize_answer(t)) { 1.0 } else { 0.0 };
    let ocr: Vec<f64> = ocr_texts.iter().map(label).collect();
    let additional: Vec<f64> = additional_texts.iter().map(label).collect();
    let special = ["yes", "no", "unanswerable"].map(|s| if gold.iter().any(|g| g == s) { 1.0 } else { 0.0 });
    let reachable = ocr.iter().chain(&additional).chain(&special).any(|&y| y > 0.0);
    Ok(Labels { ocr, additional, special, reachable })
}

fn bce_term(p: f64, y: f64) -> f64 {
    let c = p.clamp(PROB_FLOOR, PROB_CEIL);
    -(y * c.ln() + (1.0 - y) * (1.0 - c).ln())
}

/// Summed clamped BCE. Unreachable samples contribute only the special terms.
pub fn loss(p_ocr: &[f64], p_add: &[f64], special: [f64; 3], labels: &Labels) -> Result<f64> {
    if p_ocr.len() != labels.ocr.len() || p_add.len() != labels.additional.len() {
        return Err(Error::Shape("label and probability counts differ".into()));
    }
    let mut total: f64 = special.iter().zip(&labels.special).map(|(&p, &y)| bce_term(p, y)).sum();
    if labels.reachable {
        total += p_ocr.iter().zip(&labels.ocr).chain(p_add.iter().zip(&labels.additional)).map(|(&p, &y)| bce_term(p, y)).sum::<f64>();
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpecialScores {
    pub yes: f64,
    pub no: f64,
    pub unanswerable: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub answer: String,
    pub score: f64,
    pub pool: CandidateKind,
    pub p_ocr: Vec<f64>,
    pub p_add: Vec<f64>,
    pub p_special: SpecialScores,
}

impl Prediction {
    pub fn from_scores(sample_id: &str, candidates: &[AnswerCandidate], p_ocr: Vec<f64>, p_add: Vec<f64>, special: [f64; 3]) -> Result<Self> {
        let sel = select_answer(&p_ocr, &p_add, Some(special))?;
        let answer = match sel.kind {
            CandidateKind::OcrSpan | CandidateKind::Additional => candidates
                .iter()
                .filter(|c| c.kind == sel.kind)
                .nth(sel.index)
                .map(|c| c.text.clone())
                .ok_or_else(|| Error::Shape("selected index outside candidate list".into()))?,
            CandidateKind::Yes => "yes".into(),
            CandidateKind::No => "no".into(),
            CandidateKind::Unanswerable => "unanswerable".into(),
        };
        Ok(Self {
            sample_id: sample_id.to_string(),
            answer,
            score: sel.score,
            pool: sel.kind,
            p_ocr,
            p_add,
            p_special: SpecialScores { yes: special[0], no: special[1], unanswerable: special[2] },
        })
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("prediction serializes")
    }
}
