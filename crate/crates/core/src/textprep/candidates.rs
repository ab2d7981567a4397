use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::features::{positional_features, PositionalFeature};
use super::reading_order::ReadingOrder;
use super::tokenize::tokenize;
use crate::corpus::Sample;
use crate::error::{Error, Result};
use crate::normalize::normalize_answer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKind {
    OcrSpan,
    Additional,
    Yes,
    No,
    Unanswerable,
}

impl CandidateKind {
    pub fn is_special(self) -> bool {
        matches!(self, CandidateKind::Yes | CandidateKind::No | CandidateKind::Unanswerable)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AnswerCandidate {
    pub kind: CandidateKind,
    /// OCR token indices (1 or 2, consecutive in reading order). Empty for
    /// every other kind, including dictionary entries.
    pub token_indices: Vec<usize>,
    pub text: String,
    /// Union box of the span's tokens; all zeros for non-OCR candidates.
    pub positional: PositionalFeature,
    /// Positions in the encoded context whose vectors are pooled into this
    /// candidate: reading-order positions for OCR spans, word positions in
    /// the additional-text or dictionary context otherwise.
    pub context_positions: Vec<usize>,
    /// A two-token span whose tokens sit on different lines.
    pub crosses_line: bool,
}

impl AnswerCandidate {
    fn special(kind: CandidateKind) -> Self {
        let text = match kind {
            CandidateKind::Yes => "yes",
            CandidateKind::No => "no",
            CandidateKind::Unanswerable => "unanswerable",
            _ => unreachable!(),
        };
        Self {
            kind,
            token_indices: Vec::new(),
            text: text.to_string(),
            positional: PositionalFeature::ZERO,
            context_positions: Vec::new(),
            crosses_line: false,
        }
    }
}

fn specials() -> [AnswerCandidate; 3] {
    [
        AnswerCandidate::special(CandidateKind::Yes),
        AnswerCandidate::special(CandidateKind::No),
        AnswerCandidate::special(CandidateKind::Unanswerable),
    ]
}

/// Deduplicates additional texts by normalized form, dropping blanks; keeps first occurrences.
pub fn dedup_additional(texts: &[String]) -> Vec<String> {
    let mut seen = HashSet::new();
    texts
        .iter()
        .filter(|t| {
            let n = normalize_answer(t);
            !n.is_empty() && seen.insert(n)
        })
        .cloned()
        .collect()
}

/// Word sequence that additional candidates are encoded from: each deduplicated
/// text tokenized, concatenated in candidate order.
pub fn additional_context(texts: &[String]) -> Vec<String> {
    dedup_additional(texts).iter().flat_map(|t| tokenize(t)).collect()
}

/// All 1-token spans, then all 2-token spans of reading-order neighbours,
/// then one candidate per distinct additional text, then yes/no/unanswerable.
pub fn generate_candidates(sample: &Sample, order: &ReadingOrder, additional_texts: &[String]) -> Result<Vec<AnswerCandidate>> {
    let tokens = &sample.ocr_tokens;
    if !order.is_valid_for(tokens.len()) {
        return Err(Error::invalid("reading_order", "not a valid permutation of the sample's OCR tokens"));
    }
    let n = tokens.len();
    let mut out = Vec::with_capacity(2 * n + additional_texts.len() + 3);
    for (pos, &ti) in order.order.iter().enumerate() {
        out.push(AnswerCandidate {
            kind: CandidateKind::OcrSpan,
            token_indices: vec![ti],
            text: tokens[ti].text.clone(),
            positional: positional_features(&tokens[ti].quad, sample.image_width, sample.image_height)?,
            context_positions: vec![pos],
            crosses_line: false,
        });
    }
    for pos in 0..n.saturating_sub(1) {
        let (a, b) = (order.order[pos], order.order[pos + 1]);
        let union = tokens[a].quad.union(&tokens[b].quad);
        out.push(AnswerCandidate {
            kind: CandidateKind::OcrSpan,
            token_indices: vec![a, b],
            text: format!("{} {}", tokens[a].text, tokens[b].text),
            positional: positional_features(&union, sample.image_width, sample.image_height)?,
            context_positions: vec![pos, pos + 1],
            crosses_line: order.breaks_line_after(pos),
        });
    }
    let mut cursor = 0;
    for text in dedup_additional(additional_texts) {
        let words = tokenize(&text).len();
        out.push(AnswerCandidate {
            kind: CandidateKind::Additional,
            token_indices: Vec::new(),
            text,
            positional: PositionalFeature::ZERO,
            context_positions: (cursor..cursor + words).collect(),
            crosses_line: false,
        });
        cursor += words;
    }
    out.extend(specials());
    Ok(out)
}

/// Word sequence that replaces the OCR context in dictionary mode.
pub fn dictionary_context(sample: &Sample) -> Result<Vec<String>> {
    let dict = sample.dictionary.as_ref().ok_or_else(|| Error::invalid("dictionary", format!("sample `{}` has no dictionary", sample.sample_id)))?;
    Ok(dict.iter().flat_map(|e| tokenize(e)).collect())
}

/// One zero-position candidate per non-blank dictionary entry, then the specials.
pub fn dictionary_mode_candidates(sample: &Sample) -> Result<Vec<AnswerCandidate>> {
    let dict = sample.dictionary.as_ref().ok_or_else(|| Error::invalid("dictionary", format!("sample `{}` has no dictionary", sample.sample_id)))?;
    let mut out = Vec::with_capacity(dict.len() + 3);
    let mut cursor = 0;
    for entry in dict {
        let words = tokenize(entry).len();
        if words == 0 {
            continue;
        }
        out.push(AnswerCandidate {
            kind: CandidateKind::OcrSpan,
            token_indices: Vec::new(),
            text: entry.clone(),
            positional: PositionalFeature::ZERO,
            context_positions: (cursor..cursor + words).collect(),
            crosses_line: false,
        });
        cursor += words;
    }
    out.extend(specials());
    Ok(out)
}
