//! Per-token features: normalized box coordinates and coarse POS/NER ids.
//!
//! The tagger is a deterministic rule table backed by the word lists in
//! `resources/lexicon.txt`. It only has to honour the bucket counts the
//! encoders embed (12 POS buckets, 8 NER buckets); it is not a linguistic
//! tagger.

use std::collections::{HashMap, HashSet};
use std::sync::LazyLock;

use serde::{Deserialize, Serialize};

use crate::corpus::Quad;
use crate::error::{Error, Result};

/// `[x1/W, y1/H, x2/W, y2/H, x3/W, y3/H, x4/W, y4/H]`, each clamped to `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PositionalFeature(pub [f64; 8]);

impl PositionalFeature {
    pub const ZERO: PositionalFeature = PositionalFeature([0.0; 8]);

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

pub fn positional_features(quad: &Quad, width: f64, height: f64) -> Result<PositionalFeature> {
    if !(width > 0.0 && width.is_finite()) {
        return Err(Error::invalid("image_width", format!("must be positive, got {width}")));
    }
    if !(height > 0.0 && height.is_finite()) {
        return Err(Error::invalid("image_height", format!("must be positive, got {height}")));
    }
    let c = quad.coords();
    let mut p = [0.0; 8];
    for (i, v) in c.iter().enumerate() {
        let denom = if i % 2 == 0 { width } else { height };
        p[i] = (v / denom).clamp(0.0, 1.0);
    }
    Ok(PositionalFeature(p))
}

pub const NUM_POS: usize = 12;
pub const NUM_NER: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Pos {
    NounLike = 0,
    VerbLike = 1,
    AdjectiveLike = 2,
    AdverbLike = 3,
    Pronoun = 4,
    Determiner = 5,
    Preposition = 6,
    Conjunction = 7,
    Numeral = 8,
    Punctuation = 9,
    Symbol = 10,
    Other = 11,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Ner {
    None = 0,
    Number = 1,
    Capitalized = 2,
    AllCaps = 3,
    DateLike = 4,
    MoneyLike = 5,
    UnitLike = 6,
    MixedAlnum = 7,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TokenFeatureIds {
    pub pos_id: usize,
    pub ner_id: usize,
}

impl TokenFeatureIds {
    pub fn new(pos: Pos, ner: Ner) -> Self {
        Self { pos_id: pos as usize, ner_id: ner as usize }
    }
}

struct Lexicon {
    sections: HashMap<String, HashSet<String>>,
}

impl Lexicon {
    fn parse(text: &str) -> Self {
        let mut sections: HashMap<String, HashSet<String>> = HashMap::new();
        let mut current = String::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = name.to_string();
                continue;
            }
            let set = sections.entry(current.clone()).or_default();
            set.extend(line.split_whitespace().map(str::to_string));
        }
        Self { sections }
    }

    fn has(&self, section: &str, word: &str) -> bool {
        self.sections.get(section).is_some_and(|s| s.contains(word))
    }
}

static LEXICON: LazyLock<Lexicon> = LazyLock::new(|| Lexicon::parse(include_str!("../../resources/lexicon.txt")));

const SYMBOL_CHARS: &str = "$%&@#+=<>^~|*/\\€£¥₹₩¢§°©®™";

fn is_symbol(c: char) -> bool {
    SYMBOL_CHARS.contains(c)
}

fn is_currency(c: char) -> bool {
    "$€£¥₹₩¢".contains(c)
}

/// Digits with optional thousands/decimal separators, e.g. `25`, `1,000.5`.
fn is_plain_number(s: &str) -> bool {
    let s = s.strip_prefix(['-', '+']).unwrap_or(s);
    !s.is_empty()
        && s.chars().next().is_some_and(|c| c.is_ascii_digit())
        && s.chars().last().is_some_and(|c| c.is_ascii_digit())
        && s.chars().all(|c| c.is_ascii_digit() || c == ',' || c == '.')
}

fn is_date_like(word: &str, lower: &str) -> bool {
    if LEXICON.has("month", lower) || LEXICON.has("weekday", lower) {
        return true;
    }
    // 12/05/2020, 2019-01-01, 1.2.99, 10:30
    let parts: Vec<&str> = word.split(['/', '-', '.', ':']).collect();
    let seps = word.chars().filter(|c| matches!(c, '/' | '-' | '.' | ':')).count();
    if word.contains(':') && parts.len() == 2 {
        return parts.iter().all(|p| (1..=2).contains(&p.len()) && p.chars().all(|c| c.is_ascii_digit()));
    }
    parts.len() == 3
        && seps == 2
        && parts.iter().all(|p| (1..=4).contains(&p.len()) && p.chars().all(|c| c.is_ascii_digit()))
}

fn is_money_like(word: &str, lower: &str) -> bool {
    let has_digit = word.chars().any(|c| c.is_ascii_digit());
    if !has_digit {
        return false;
    }
    let stripped: String = word.chars().filter(|c| !is_currency(*c)).collect();
    if stripped.len() != word.len() && is_plain_number(&stripped) {
        return true;
    }
    // 5usd, 20eur
    let digits_end = lower.find(|c: char| !(c.is_ascii_digit() || c == '.' || c == ',')).unwrap_or(lower.len());
    digits_end > 0 && LEXICON.has("currency", &lower[digits_end..])
}

fn is_unit_like(lower: &str) -> bool {
    let digits_end = lower.find(|c: char| !(c.is_ascii_digit() || c == '.' || c == ',')).unwrap_or(lower.len());
    if digits_end == 0 || digits_end == lower.len() {
        return false;
    }
    let suffix = &lower[digits_end..];
    suffix == "%" || LEXICON.has("unit", suffix)
}

/// Tags one word without context.
pub fn pos_ner_ids(word: &str) -> TokenFeatureIds {
    TokenFeatureIds { pos_id: pos_of(word) as usize, ner_id: ner_of(word) as usize }
}

/// Tags a word sequence. Context only matters for one rule: a word that
/// would otherwise be `Other` right after a determiner is noun-like.
pub fn tag_context(words: &[String]) -> Vec<TokenFeatureIds> {
    let mut out: Vec<TokenFeatureIds> = words.iter().map(|w| pos_ner_ids(w)).collect();
    for i in 1..out.len() {
        if out[i].pos_id == Pos::Other as usize && out[i - 1].pos_id == Pos::Determiner as usize {
            out[i].pos_id = Pos::NounLike as usize;
        }
    }
    out
}

pub fn pos_of(word: &str) -> Pos {
    if word.is_empty() {
        return Pos::Other;
    }
    let lower = word.to_lowercase();
    if word.chars().all(|c| c.is_ascii_punctuation() || is_symbol(c)) {
        return if word.chars().any(is_symbol) { Pos::Symbol } else { Pos::Punctuation };
    }
    let has_digit = word.chars().any(|c| c.is_ascii_digit());
    if has_digit && word.chars().all(|c| c.is_ascii_digit() || ",.:/-+".contains(c) || is_currency(c) || c == '%') {
        return Pos::Numeral;
    }
    if LEXICON.has("number_word", &lower) && !matches!(lower.as_str(), "first" | "second" | "third") {
        return Pos::Numeral;
    }
    for (section, pos) in [
        ("determiner", Pos::Determiner),
        ("pronoun", Pos::Pronoun),
        ("preposition", Pos::Preposition),
        ("conjunction", Pos::Conjunction),
        ("verb", Pos::VerbLike),
        ("adverb", Pos::AdverbLike),
        ("adjective", Pos::AdjectiveLike),
    ] {
        if LEXICON.has(section, &lower) {
            return pos;
        }
    }
    let alpha = lower.chars().all(|c| c.is_alphabetic() || c == '\'' || c == '-');
    if alpha {
        let n = lower.chars().count();
        if n > 4 && lower.ends_with("ly") {
            return Pos::AdverbLike;
        }
        if n > 4 && (lower.ends_with("ing") || lower.ends_with("ed")) {
            return Pos::VerbLike;
        }
        if n > 5 && ["ous", "ful", "able", "ible", "ive", "less", "ish"].iter().any(|s| lower.ends_with(s)) {
            return Pos::AdjectiveLike;
        }
        return Pos::NounLike;
    }
    Pos::Other
}

pub fn ner_of(word: &str) -> Ner {
    let lower = word.to_lowercase();
    if is_money_like(word, &lower) {
        return Ner::MoneyLike;
    }
    if is_date_like(word, &lower) {
        return Ner::DateLike;
    }
    if is_unit_like(&lower) {
        return Ner::UnitLike;
    }
    if is_plain_number(word) || LEXICON.has("number_word", &lower) && !matches!(lower.as_str(), "first" | "second" | "third") {
        return Ner::Number;
    }
    let has_digit = word.chars().any(|c| c.is_ascii_digit());
    let has_alpha = word.chars().any(char::is_alphabetic);
    if has_digit && has_alpha {
        return Ner::MixedAlnum;
    }
    let letters: Vec<char> = word.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase()) {
        return Ner::AllCaps;
    }
    let mut chars = word.chars();
    if chars.next().is_some_and(char::is_uppercase) && chars.any(char::is_lowercase) {
        return Ner::Capitalized;
    }
    Ner::None
}
