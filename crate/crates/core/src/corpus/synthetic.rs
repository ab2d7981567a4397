//! Deterministic synthetic scenes with known answers.
//!
//! Scenes live on a 1000x1000 canvas split into a 2x2 grid. Each object
//! occupies its own cell and carries one lowercase word at its centre;
//! extra distractor words fill empty cells or the bottom band of occupied
//! ones. Four question families:
//!
//! * `a` "what does the sign say?": the 1–2 uppercase words on the sign.
//! * `b` "what word is on the <object>?": the word nearest the object's centre.
//! * `c` "is there a <object> in the image?": yes / no.
//! * `d` "what is the phone number?" and similar: unanswerable.
//!
//! Family is assigned round-robin by sample index, so any contiguous split
//! is balanced.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, OcrToken, Quad, Sample, SceneObject};
use crate::error::{Error, Result};
use crate::normalize::normalize_answer;
use crate::textprep::{compute_reading_order, generate_candidates};

pub const CANVAS: f64 = 1000.0;
const CELL: f64 = 500.0;

const OBJECT_NAMES: [&str; 8] = ["bus", "car", "truck", "bottle", "shirt", "door", "board", "cup"];
const ATTRIBUTES: [&str; 6] = ["red", "blue", "green", "white", "black", "yellow"];
const UNANSWERABLE_QUESTIONS: [&str; 2] = ["what is the phone number?", "what is the website address?"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticConfig {
    pub num_samples: usize,
    pub vocab_size: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { num_samples: 200, vocab_size: 50, seed: 7 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    SignText,
    ObjectWord,
    YesNo,
    Unanswerable,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::SignText, Family::ObjectWord, Family::YesNo, Family::Unanswerable];

    pub fn letter(self) -> char {
        match self {
            Family::SignText => 'a',
            Family::ObjectWord => 'b',
            Family::YesNo => 'c',
            Family::Unanswerable => 'd',
        }
    }

    /// Family encoded in a synthetic sample id (`"b-00017"`).
    pub fn of_sample_id(id: &str) -> Option<Family> {
        let letter = id.split('-').next()?;
        Family::ALL.into_iter().find(|f| letter.len() == 1 && letter.starts_with(f.letter()))
    }
}

/// Pronounceable four-letter words, unique for indices below 4900.
fn vocabulary(size: usize) -> Vec<String> {
    const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let syllables: Vec<String> = CONSONANTS
        .iter()
        .flat_map(|&c| VOWELS.iter().map(move |&v| format!("{}{}", c as char, v as char)))
        .collect();
    let n = syllables.len();
    (0..size)
        .map(|i| {
            let mut w = format!("{}{}", syllables[i % n], syllables[(i / n) % n]);
            if i >= n * n {
                w.push_str(&syllables[(i / (n * n)) % n]);
            }
            w
        })
        .collect()
}

/// Index of the token whose quad centre is nearest `point`; ties go to the lower index.
pub fn nearest_token(tokens: &[OcrToken], point: (f64, f64)) -> Option<usize> {
    let dist = |t: &OcrToken| {
        let (x, y) = t.quad.center();
        (x - point.0).powi(2) + (y - point.1).powi(2)
    };
    (0..tokens.len()).min_by(|&a, &b| dist(&tokens[a]).total_cmp(&dist(&tokens[b])).then(a.cmp(&b)))
}

pub fn generate_synthetic(config: SyntheticConfig) -> Result<Dataset> {
    if config.num_samples == 0 {
        return Err(Error::invalid("num_samples", "must be at least 1"));
    }
    if config.vocab_size < 10 {
        return Err(Error::invalid("vocab_size", format!("must be at least 10, got {}", config.vocab_size)));
    }
    let vocab = vocabulary(config.vocab_size);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut samples = Vec::with_capacity(config.num_samples);
    for i in 0..config.num_samples {
        let family = Family::ALL[i % 4];
        let mut attempt = 0;
        let sample = loop {
            let s = generate_one(i, family, &vocab, &mut rng);
            if answer_reachable(&s)? {
                break s;
            }
            attempt += 1;
            if attempt >= 100 {
                return Err(Error::invalid("synthetic", format!("could not place a reachable answer for sample {i}")));
            }
        };
        samples.push(sample);
    }
    Ok(Dataset { name: format!("synthetic-seed{}", config.seed), samples })
}

fn answer_reachable(s: &Sample) -> Result<bool> {
    let order = compute_reading_order(&s.ocr_tokens, s.image_width, s.image_height);
    let cands = generate_candidates(s, &order, &[])?;
    let gold = normalize_answer(&s.gold_answers[0]);
    Ok(cands.iter().any(|c| normalize_answer(&c.text) == gold))
}

fn token_at(text: String, cx: f64, cy: f64, height: f64) -> OcrToken {
    let width = 18.0 * text.chars().count() as f64 + 10.0;
    OcrToken { text, quad: Quad::from_rect(cx - width / 2.0, cy - height / 2.0, width, height) }
}

fn generate_one(index: usize, family: Family, vocab: &[String], rng: &mut ChaCha8Rng) -> Sample {
    let mut cells = [(0.0, 0.0), (CELL, 0.0), (0.0, CELL), (CELL, CELL)];
    cells.shuffle(rng);
    let mut names: Vec<&str> = OBJECT_NAMES.to_vec();
    names.shuffle(rng);
    let mut words: Vec<&String> = vocab.iter().collect();
    words.shuffle(rng);
    let mut next_word = words.into_iter();

    let n_plain = match family {
        Family::SignText => rng.gen_range(0..=3),
        _ => rng.gen_range(1..=4),
    };
    let mut objects = Vec::new();
    let mut tokens = Vec::new();
    let mut centers = Vec::new();

    let mut place_object = |name: &str, cell: (f64, f64), rng: &mut ChaCha8Rng| {
        let cx = cell.0 + CELL / 2.0 + rng.gen_range(-50.0..=50.0);
        let cy = cell.1 + CELL / 2.0 + rng.gen_range(-50.0..=50.0);
        let w = rng.gen_range(220.0..=320.0);
        let h = rng.gen_range(160.0..=240.0);
        let attributes = if rng.gen_bool(0.5) { vec![ATTRIBUTES[rng.gen_range(0..ATTRIBUTES.len())].to_string()] } else { vec![] };
        objects.push(SceneObject { name: name.to_string(), attributes, quad: Quad::from_rect(cx - w / 2.0, cy - h / 2.0, w, h) });
        (cx, cy)
    };

    let mut sign_text = Vec::new();
    let mut used_cells = 0;
    if family == Family::SignText {
        let (cx, cy) = place_object("sign", cells[0], rng);
        used_cells = 1;
        let k = rng.gen_range(1..=2);
        let h = rng.gen_range(30.0..=44.0);
        let texts: Vec<String> = (0..k).map(|_| next_word.next().expect("vocab >= 10").to_uppercase()).collect();
        let widths: Vec<f64> = texts.iter().map(|t| 18.0 * t.chars().count() as f64 + 10.0).collect();
        let gap = 12.0;
        let total: f64 = widths.iter().sum::<f64>() + gap * (k as f64 - 1.0);
        let mut x = cx - total / 2.0;
        for (t, w) in texts.iter().zip(&widths) {
            tokens.push(token_at(t.clone(), x + w / 2.0, cy, h));
            x += w + gap;
        }
        sign_text = texts;
    }
    for name in names.iter().take(n_plain) {
        let c = place_object(name, cells[used_cells], rng);
        used_cells += 1;
        centers.push(c);
        let (jx, jy) = (rng.gen_range(-15.0..=15.0), rng.gen_range(-15.0..=15.0));
        tokens.push(token_at(next_word.next().expect("vocab >= 10").clone(), c.0 + jx, c.1 + jy, rng.gen_range(30.0..=44.0)));
    }

    let target = rng.gen_range(3..=8usize).max(tokens.len());
    while tokens.len() < target {
        let text = next_word.next().expect("vocab >= 10").clone();
        let h = rng.gen_range(30.0..=44.0);
        let (cx, cy) = if used_cells < 4 {
            let cell = cells[rng.gen_range(used_cells..4)];
            (cell.0 + rng.gen_range(80.0..=420.0), cell.1 + rng.gen_range(60.0..=440.0))
        } else {
            let cell = cells[rng.gen_range(0..4)];
            (cell.0 + rng.gen_range(80.0..=420.0), cell.1 + rng.gen_range(455.0..=475.0))
        };
        tokens.push(token_at(text, cx, cy, h));
    }

    let (question, answer) = match family {
        Family::SignText => ("what does the sign say?".to_string(), sign_text.join(" ")),
        Family::ObjectWord => {
            let k = rng.gen_range(0..n_plain);
            let nearest = nearest_token(&tokens, centers[k]).expect("tokens present");
            (format!("what word is on the {}?", names[k]), tokens[nearest].text.clone())
        }
        Family::YesNo => {
            if rng.gen_bool(0.5) {
                let k = rng.gen_range(0..n_plain);
                (format!("is there a {} in the image?", names[k]), "yes".to_string())
            } else {
                let absent = names[rng.gen_range(n_plain..names.len())];
                (format!("is there a {absent} in the image?"), "no".to_string())
            }
        }
        Family::Unanswerable => {
            (UNANSWERABLE_QUESTIONS[rng.gen_range(0..UNANSWERABLE_QUESTIONS.len())].to_string(), "unanswerable".to_string())
        }
    };

    Sample {
        sample_id: format!("{}-{index:05}", family.letter()),
        image_width: CANVAS,
        image_height: CANVAS,
        question,
        gold_answers: vec![answer],
        ocr_tokens: tokens,
        objects,
        dictionary: None,
    }
}
