//! Turns raw OCR tokens into model inputs: reading order, the OCR context,
//! positional features, POS/NER ids and answer candidates.

mod candidates;
mod features;
mod reading_order;
mod tokenize;

pub use candidates::{
    additional_context, dedup_additional, dictionary_context, dictionary_mode_candidates, generate_candidates, AnswerCandidate,
    CandidateKind,
};
pub use features::{
    ner_of, pos_ner_ids, pos_of, positional_features, tag_context, Ner, Pos, PositionalFeature, TokenFeatureIds, NUM_NER, NUM_POS,
};
pub use reading_order::{compute_reading_order, ReadingOrder};
pub use tokenize::tokenize;

use crate::corpus::OcrToken;
use crate::error::Result;

/// The OCR tokens serialized as a pseudo-sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct OcrContext {
    pub words: Vec<String>,
    pub positions: Vec<PositionalFeature>,
    /// Token index behind each context position.
    pub token_indices: Vec<usize>,
}

impl OcrContext {
    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

pub fn build_ocr_context(tokens: &[OcrToken], order: &ReadingOrder, width: f64, height: f64) -> Result<OcrContext> {
    let mut ctx = OcrContext { words: Vec::new(), positions: Vec::new(), token_indices: Vec::new() };
    for &i in &order.order {
        ctx.words.push(tokens[i].text.clone());
        ctx.positions.push(positional_features(&tokens[i].quad, width, height)?);
        ctx.token_indices.push(i);
    }
    Ok(ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Quad;

    fn tok(text: &str, x: f64, y: f64) -> OcrToken {
        OcrToken { text: text.into(), quad: Quad::from_rect(x, y, 60.0, 30.0) }
    }

    #[test]
    fn context_follows_layout() {
        let toks = [tok("turn", 300.0, 100.0), tok("No", 20.0, 100.0), tok("right", 150.0, 102.0)];
        let order = compute_reading_order(&toks, 640.0, 480.0);
        let ctx = build_ocr_context(&toks, &order, 640.0, 480.0).unwrap();
        assert_eq!(ctx.words, ["No", "right", "turn"]);
        assert_eq!(ctx.token_indices, [1, 2, 0]);
        assert_eq!(ctx.positions[0], positional_features(&toks[1].quad, 640.0, 480.0).unwrap());
    }

    #[test]
    fn empty_context() {
        let order = compute_reading_order(&[], 1.0, 1.0);
        assert!(build_ocr_context(&[], &order, 1.0, 1.0).unwrap().is_empty());
    }
}
