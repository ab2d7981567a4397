//! Word vectors with out-of-vocabulary handling, and the trainable
//! bidirectional contextualizer that supplies per-position contextual
//! embeddings.

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::matrix::sigmoid;
use crate::nn::rnn::{BiLstmParams, LstmParams};
use crate::nn::{Graph, Matrix, ParamStore, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OovMode {
    /// Unknown words share `num_hash_buckets` extra rows, picked by a stable hash.
    HashBucket,
    /// Unknown words map to the zero vector.
    Zero,
}

impl FromStr for OovMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hash_bucket" => Ok(OovMode::HashBucket),
            "zero" => Ok(OovMode::Zero),
            other => Err(Error::Config(format!("oov_mode must be hash_bucket|zero, got `{other}`"))),
        }
    }
}

impl OovMode {
    pub fn as_str(self) -> &'static str {
        match self {
            OovMode::HashBucket => "hash_bucket",
            OovMode::Zero => "zero",
        }
    }
}

/// 64-bit FNV-1a over the UTF-8 bytes. Fixed constants, so bucket
/// assignment is identical across runs, builds and platforms.
pub fn stable_hash(s: &str) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    s.bytes().fold(OFFSET, |h, b| (h ^ b as u64).wrapping_mul(PRIME))
}

/// Word → row mapping. Rows `0..words.len()` are vocabulary rows; in
/// hash-bucket mode the next `num_hash_buckets` rows are OOV buckets.
#[derive(Clone, Debug, PartialEq)]
pub struct WordLookup {
    pub dim: usize,
    words: Vec<String>,
    index: HashMap<String, usize>,
    pub oov_mode: OovMode,
    pub num_hash_buckets: usize,
}

impl WordLookup {
    /// Later duplicates are ignored; callers that need last-wins semantics
    /// resolve duplicates before building.
    pub fn new(words: Vec<String>, dim: usize, oov_mode: OovMode, num_hash_buckets: usize) -> Self {
        let mut index = HashMap::with_capacity(words.len());
        for (i, w) in words.iter().enumerate() {
            index.entry(w.clone()).or_insert(i);
        }
        Self { dim, words, index, oov_mode, num_hash_buckets: num_hash_buckets.max(1) }
    }

    /// Sorted, lowercased vocabulary of every word yielded.
    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>, dim: usize, oov_mode: OovMode, num_hash_buckets: usize) -> Self {
        let set: BTreeSet<String> = words.into_iter().map(str::to_lowercase).collect();
        Self::new(set.into_iter().collect(), dim, oov_mode, num_hash_buckets)
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn vocab_len(&self) -> usize {
        self.words.len()
    }

    pub fn num_rows(&self) -> usize {
        match self.oov_mode {
            OovMode::HashBucket => self.words.len() + self.num_hash_buckets,
            OovMode::Zero => self.words.len(),
        }
    }

    /// Row for `word`: lowercased lookup, then the raw form, then the OOV rule.
    /// `None` means the zero vector.
    pub fn row_of(&self, word: &str) -> Option<usize> {
        let lower = word.to_lowercase();
        if let Some(&i) = self.index.get(&lower).or_else(|| self.index.get(word)) {
            return Some(i);
        }
        match self.oov_mode {
            OovMode::HashBucket => Some(self.words.len() + (stable_hash(&lower) % self.num_hash_buckets as u64) as usize),
            OovMode::Zero => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    pub lookup: WordLookup,
    pub rows: Matrix,
    pub trainable: bool,
}

impl EmbeddingTable {
    pub fn random<R: Rng>(lookup: WordLookup, rng: &mut R) -> Self {
        let rows = Matrix::random_uniform(lookup.num_rows(), lookup.dim, 1.0 / (lookup.dim as f64).sqrt(), rng);
        Self { lookup, rows, trainable: true }
    }

    pub fn dim(&self) -> usize {
        self.lookup.dim
    }
}

pub fn embed_words(words: &[String], table: &EmbeddingTable) -> Matrix {
    let mut out = Matrix::zeros(words.len(), table.dim());
    for (i, w) in words.iter().enumerate() {
        if let Some(r) = table.lookup.row_of(w) {
            out.row_mut(i).copy_from_slice(table.rows.row(r));
        }
    }
    out
}

/// Tape version of [`embed_words`] over a table held in the parameter store.
pub fn embed_words_graph(g: &mut Graph, table: Var, lookup: &WordLookup, words: &[String]) -> Var {
    let rows: Vec<Option<usize>> = words.iter().map(|w| lookup.row_of(w)).collect();
    let indices: Vec<usize> = rows.iter().map(|r| r.unwrap_or(0)).collect();
    let gathered = g.gather_rows(table, &indices);
    if rows.iter().all(Option::is_some) {
        return gathered;
    }
    let mut mask = Matrix::zeros(words.len(), lookup.dim);
    for (i, r) in rows.iter().enumerate() {
        if r.is_some() {
            mask.row_mut(i).fill(1.0);
        }
    }
    let mask = g.constant(mask);
    g.mul(gathered, mask)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PretrainedStats {
    pub lines: usize,
    pub duplicates: usize,
}

/// Reads `word v1 ... vd` lines. An optional `count dim` header on the
/// first line is accepted. Duplicate words keep their last vector.
pub fn load_pretrained(path: impl AsRef<Path>, expected_dim: usize, oov_mode: OovMode, num_hash_buckets: usize) -> Result<(EmbeddingTable, PretrainedStats)> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pretrained(&text, expected_dim, oov_mode, num_hash_buckets)
}

pub fn parse_pretrained(text: &str, expected_dim: usize, oov_mode: OovMode, num_hash_buckets: usize) -> Result<(EmbeddingTable, PretrainedStats)> {
    let mut stats = PretrainedStats::default();
    let mut words: Vec<String> = Vec::new();
    let mut vectors: Vec<Vec<f64>> = Vec::new();
    let mut position: HashMap<String, usize> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let rest: Vec<&str> = fields.collect();
        if line_no == 1 && rest.len() == 1 && word.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
            continue;
        }
        stats.lines += 1;
        if rest.len() != expected_dim {
            return Err(Error::Record {
                line: line_no,
                field: "vector".into(),
                message: format!("expected {expected_dim} values for `{word}`, got {}", rest.len()),
            });
        }
        let v = rest
            .iter()
            .map(|s| s.parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| Error::Record { line: line_no, field: "vector".into(), message: format!("non-numeric or non-finite value for `{word}`") })?;
        match position.get(word) {
            Some(&k) => {
                stats.duplicates += 1;
                log::warn!("line {line_no}: duplicate vector for `{word}`; keeping the later one");
                vectors[k] = v;
            }
            None => {
                position.insert(word.to_string(), words.len());
                words.push(word.to_string());
                vectors.push(v);
            }
        }
    }
    let lookup = WordLookup::new(words, expected_dim, oov_mode, num_hash_buckets);
    let mut rows = Matrix::zeros(lookup.num_rows(), expected_dim);
    for (i, v) in vectors.iter().enumerate() {
        rows.row_mut(i).copy_from_slice(v);
    }
    Ok((EmbeddingTable { lookup, rows, trainable: false }, stats))
}

/// Single-layer bidirectional LSTM producing `d_ctx`-dim contextual vectors
/// (`d_ctx / 2` per direction).
#[derive(Clone, Debug)]
pub struct ContextualEncoder {
    pub bilstm: BiLstmParams,
}

impl ContextualEncoder {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, input_dim: usize, output_dim: usize, rng: &mut R) -> Result<Self> {
        if output_dim == 0 || output_dim % 2 != 0 {
            return Err(Error::Config(format!("contextual dim must be a positive even number, got {output_dim}")));
        }
        Ok(Self { bilstm: BiLstmParams::new(store, prefix, input_dim, output_dim / 2, rng) })
    }

    pub fn output_dim(&self) -> usize {
        self.bilstm.output_dim()
    }

    pub fn input_dim(&self) -> usize {
        self.bilstm.forward.input_dim
    }

    pub fn encode(&self, g: &mut Graph, word_vectors: Var) -> Var {
        self.bilstm.run(g, word_vectors)
    }

    pub fn contextual_encode(&self, store: &ParamStore, word_vectors: &Matrix) -> Result<Matrix> {
        self.check_input(word_vectors)?;
        let mut g = Graph::new(store);
        let x = g.constant(word_vectors.clone());
        let y = self.encode(&mut g, x);
        Ok(g.value(y).clone())
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.rows() == 0 {
            return Err(Error::Empty("contextual_encode needs at least one position"));
        }
        if x.cols() != self.input_dim() {
            return Err(Error::Shape(format!("contextual encoder expects {} columns, got {}", self.input_dim(), x.cols())));
        }
        Ok(())
    }

    /// Encodes a padded batch in lock-step. Padded steps leave the recurrent
    /// state untouched, so each sequence sees exactly its own positions.
    pub fn encode_batch(&self, store: &ParamStore, batch: &[Matrix]) -> Result<Vec<Matrix>> {
        for x in batch {
            self.check_input(x)?;
        }
        let fwd = run_direction_batched(store, &self.bilstm.forward, batch, false);
        let bwd = run_direction_batched(store, &self.bilstm.backward, batch, true);
        Ok(fwd.iter().zip(&bwd).map(|(f, b)| Matrix::concat_cols(&[f, b])).collect())
    }
}

fn run_direction_batched(store: &ParamStore, p: &LstmParams, batch: &[Matrix], reverse: bool) -> Vec<Matrix> {
    let (w_ih, w_hh, bias) = (store.get(p.w_ih), store.get(p.w_hh), store.get(p.bias));
    let h = p.hidden;
    let n = batch.len();
    let max_len = batch.iter().map(Matrix::rows).max().unwrap_or(0);
    let mut state_h = Matrix::zeros(n, h);
    let mut state_c = Matrix::zeros(n, h);
    let mut outputs: Vec<Matrix> = batch.iter().map(|x| Matrix::zeros(x.rows(), h)).collect();
    let steps: Vec<usize> = if reverse { (0..max_len).rev().collect() } else { (0..max_len).collect() };
    for t in steps {
        let mut x_t = Matrix::zeros(n, p.input_dim);
        for (b, x) in batch.iter().enumerate() {
            if t < x.rows() {
                x_t.row_mut(b).copy_from_slice(x.row(t));
            }
        }
        let mut z = x_t.matmul(w_ih);
        z.add_assign(&state_h.matmul(w_hh));
        for (b, x) in batch.iter().enumerate() {
            if t >= x.rows() {
                continue;
            }
            for j in 0..h {
                let zi = z.get(b, j) + bias.get(0, j);
                let zf = z.get(b, h + j) + bias.get(0, h + j);
                let zg = z.get(b, 2 * h + j) + bias.get(0, 2 * h + j);
                let zo = z.get(b, 3 * h + j) + bias.get(0, 3 * h + j);
                let c = sigmoid(zf) * state_c.get(b, j) + sigmoid(zi) * zg.tanh();
                let hv = sigmoid(zo) * c.tanh();
                state_c.set(b, j, c);
                state_h.set(b, j, hv);
                outputs[b].set(t, j, hv);
            }
        }
    }
    outputs
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn in_vocab_lookup_is_deterministic_and_case_folded() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let lookup = WordLookup::from_words(["Bus", "stop"], 4, OovMode::HashBucket, 8);
        let table = EmbeddingTable::random(lookup, &mut rng);
        let m = embed_words(&words(&["stop", "stop", "BUS", "bus"]), &table);
        assert_eq!(m.row(0), m.row(1));
        assert_eq!(m.row(2), m.row(3));
    }

    #[test]
    fn oov_zero_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let table = EmbeddingTable::random(WordLookup::from_words(["a"], 3, OovMode::Zero, 8), &mut rng);
        let m = embed_words(&words(&["zzz"]), &table);
        assert_eq!(m.row(0), [0.0, 0.0, 0.0]);
    }

    #[test]
    fn stable_hash_reference_values() {
        // FNV-1a test vectors
        assert_eq!(stable_hash(""), 0xcbf29ce484222325);
        assert_eq!(stable_hash("a"), 0xaf63dc4c8601ec8c);
        assert_eq!(stable_hash("foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn raw_case_fallback() {
        let lookup = WordLookup::new(words(&["NASA"]), 2, OovMode::Zero, 1);
        assert_eq!(lookup.row_of("NASA"), Some(0));
        assert_eq!(lookup.row_of("nasa"), None);
    }

    #[test]
    fn pretrained_parsing() {
        let text = "a 1 2 3 4 5\nb 1 1 1 1 1\nc 0 0 0 0 0\n";
        let (t, stats) = parse_pretrained(text, 5, OovMode::Zero, 1).unwrap();
        assert_eq!(t.lookup.vocab_len(), 3);
        assert_eq!(t.dim(), 5);
        assert!(!t.trainable);
        assert_eq!(stats.duplicates, 0);

        let err = parse_pretrained("a 1 2 3 4 5\nb 1 2 3 4\n", 5, OovMode::Zero, 1).unwrap_err();
        assert!(matches!(err, Error::Record { line: 2, .. }), "{err}");

        let (t, stats) = parse_pretrained("3 2\na 1 1\nb 2 2\na 9 9\n", 2, OovMode::Zero, 1).unwrap();
        assert_eq!(stats.duplicates, 1);
        assert_eq!(t.lookup.vocab_len(), 2);
        assert_eq!(embed_words(&words(&["a"]), &t).row(0), [9.0, 9.0]);
    }

    #[test]
    fn contextual_shapes_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        let enc = ContextualEncoder::new(&mut store, "ctx", 3, 4, &mut rng).unwrap();
        let out = enc.contextual_encode(&store, &Matrix::filled(1, 3, 0.2)).unwrap();
        assert_eq!(out.shape(), (1, 4));
        assert!(enc.contextual_encode(&store, &Matrix::zeros(0, 3)).is_err());
        assert!(ContextualEncoder::new(&mut store, "odd", 3, 3, &mut rng).is_err());
    }

    #[test]
    fn reversal_changes_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut store = ParamStore::new();
        let enc = ContextualEncoder::new(&mut store, "ctx", 2, 4, &mut rng).unwrap();
        let x = Matrix::from_rows(&[vec![1.0, -0.5], vec![0.3, 0.8], vec![-1.0, 0.1]]);
        let rev = Matrix::from_rows(&[x.row(2).to_vec(), x.row(1).to_vec(), x.row(0).to_vec()]);
        let a = enc.contextual_encode(&store, &x).unwrap();
        let b = enc.contextual_encode(&store, &rev).unwrap();
        // Position 0 of `a` and position 2 of `b` see the same word with different context.
        assert!((0..4).any(|c| (a.get(0, c) - b.get(2, c)).abs() > 1e-6));
    }

    #[test]
    fn zero_weights_follow_hand_stepped_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut store = ParamStore::new();
        let enc = ContextualEncoder::new(&mut store, "ctx", 2, 2, &mut rng).unwrap();
        // zero every weight, keep chosen biases
        for id in store.ids().collect::<Vec<_>>() {
            let m = store.get_mut(id);
            m.data_mut().fill(0.0);
        }
        let bias = [0.3, -0.2, 0.5, 0.1];
        for p in [&enc.bilstm.forward, &enc.bilstm.backward] {
            store.get_mut(p.bias).data_mut().copy_from_slice(&bias);
        }
        let x = Matrix::from_rows(&[vec![5.0, -2.0], vec![0.7, 9.0]]);
        let out = enc.contextual_encode(&store, &x).unwrap();

        // With zero weights every step sees the same pre-activations.
        let (i, f, g, o) = (sigmoid(bias[0]), sigmoid(bias[1]), bias[2].tanh(), sigmoid(bias[3]));
        let c1 = i * g;
        let h1 = o * c1.tanh();
        let c2 = f * c1 + i * g;
        let h2 = o * c2.tanh();
        // forward: step 1 at position 0, step 2 at position 1; backward mirrored
        assert!((out.get(0, 0) - h1).abs() < 1e-15);
        assert!((out.get(1, 0) - h2).abs() < 1e-15);
        assert!((out.get(1, 1) - h1).abs() < 1e-15);
        assert!((out.get(0, 1) - h2).abs() < 1e-15);
    }
}
