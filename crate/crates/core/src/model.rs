//! The full network: embeddings, encoders, relational reasoning and answer
//! scoring wired over one sample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::answer::{make_labels, AnswerScorer, Labels, Prediction, PROB_CEIL, PROB_FLOOR};
use crate::config::RunConfig;
use crate::corpus::{Dataset, Sample};
use crate::embeddings::{embed_words_graph, load_pretrained, ContextualEncoder, WordLookup};
use crate::encoders::{object_context, pool_objects, render_object, ContextEncoder, ObjectContext, QuestionEncoder};
use crate::error::{Error, Result};
use crate::nn::{Gradients, Graph, Matrix, ParamId, ParamStore, Var};
use crate::relate::{Relater, POSITION_DIM};

/// Per-entry range of randomly initialised word rows; roughly the magnitude of
/// common pretrained vectors, so word identity survives the first LSTM layer.
const WORD_INIT_SCALE: f64 = 1.0;
use crate::textprep::{
    additional_context, build_ocr_context, compute_reading_order, dictionary_context, dictionary_mode_candidates, generate_candidates,
    tag_context, tokenize, AnswerCandidate, CandidateKind, PositionalFeature, TokenFeatureIds,
};

/// A word sequence ready for a context encoder.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextInput {
    pub words: Vec<String>,
    pub features: Vec<TokenFeatureIds>,
    /// `len x 8`.
    pub positions: Matrix,
}

impl ContextInput {
    fn new(words: Vec<String>, positions: &[PositionalFeature]) -> Self {
        let features = tag_context(&words);
        let mut m = Matrix::zeros(words.len(), POSITION_DIM);
        for (i, p) in positions.iter().enumerate() {
            m.row_mut(i).copy_from_slice(p.as_slice());
        }
        Self { words, features, positions: m }
    }

    fn unpositioned(words: Vec<String>) -> Self {
        let n = words.len();
        Self::new(words, &vec![PositionalFeature::ZERO; n])
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObjectInput {
    pub context: ObjectContext,
    pub features: Vec<TokenFeatureIds>,
    /// `n_objects x 8`.
    pub positions: Matrix,
}

/// Everything the network needs from one sample, computed without parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSample {
    pub sample_id: String,
    pub question_words: Vec<String>,
    /// OCR context, or the dictionary in dictionary mode. May be empty.
    pub context: ContextInput,
    pub objects: Option<ObjectInput>,
    pub additional: Option<ContextInput>,
    pub candidates: Vec<AnswerCandidate>,
    /// `ocr-span candidates x context length`.
    pub span_pool: Matrix,
    /// `additional candidates x additional-context length`.
    pub add_pool: Matrix,
    pub gold_answers: Vec<String>,
}

impl PreparedSample {
    pub fn of_kind(&self, kind: CandidateKind) -> impl Iterator<Item = &AnswerCandidate> {
        self.candidates.iter().filter(move |c| c.kind == kind)
    }

    pub fn num_ocr(&self) -> usize {
        self.of_kind(CandidateKind::OcrSpan).count()
    }

    pub fn num_additional(&self) -> usize {
        self.of_kind(CandidateKind::Additional).count()
    }

    pub fn labels(&self) -> Result<Labels> {
        let ocr: Vec<&str> = self.of_kind(CandidateKind::OcrSpan).map(|c| c.text.as_str()).collect();
        let add: Vec<&str> = self.of_kind(CandidateKind::Additional).map(|c| c.text.as_str()).collect();
        make_labels(&self.gold_answers, &ocr, &add)
    }
}

fn pooling(cands: &[&AnswerCandidate], len: usize) -> Matrix {
    let mut m = Matrix::zeros(cands.len(), len);
    for (r, c) in cands.iter().enumerate() {
        for &p in &c.context_positions {
            m.set(r, p, 1.0 / c.context_positions.len() as f64);
        }
    }
    m
}

pub fn prepare_sample(sample: &Sample, dictionary_mode: bool, additional_texts: &[String]) -> Result<PreparedSample> {
    let question_words = tokenize(&sample.question);
    if question_words.is_empty() {
        return Err(Error::invalid("question", format!("sample `{}` has an empty question", sample.sample_id)));
    }
    let (context, candidates) = if dictionary_mode {
        let words = dictionary_context(sample)?;
        (ContextInput::unpositioned(words), dictionary_mode_candidates(sample)?)
    } else {
        let order = compute_reading_order(&sample.ocr_tokens, sample.image_width, sample.image_height);
        let ocr = build_ocr_context(&sample.ocr_tokens, &order, sample.image_width, sample.image_height)?;
        (ContextInput::new(ocr.words, &ocr.positions), generate_candidates(sample, &order, additional_texts)?)
    };
    let additional = if dictionary_mode {
        None
    } else {
        Some(additional_context(additional_texts)).filter(|w| !w.is_empty()).map(ContextInput::unpositioned)
    };
    let objects = if sample.objects.is_empty() {
        None
    } else {
        let ctx = object_context(&sample.objects);
        let features = tag_context(&ctx.words);
        let mut positions = Matrix::zeros(sample.objects.len(), POSITION_DIM);
        for (j, o) in sample.objects.iter().enumerate() {
            let p = crate::textprep::positional_features(&o.quad, sample.image_width, sample.image_height)?;
            positions.row_mut(j).copy_from_slice(p.as_slice());
        }
        Some(ObjectInput { context: ctx, features, positions })
    };
    let spans: Vec<&AnswerCandidate> = candidates.iter().filter(|c| c.kind == CandidateKind::OcrSpan).collect();
    let adds: Vec<&AnswerCandidate> = candidates.iter().filter(|c| c.kind == CandidateKind::Additional).collect();
    let span_pool = pooling(&spans, context.len());
    let add_pool = pooling(&adds, additional.as_ref().map_or(0, ContextInput::len));
    Ok(PreparedSample {
        sample_id: sample.sample_id.clone(),
        question_words,
        context,
        objects,
        additional,
        candidates,
        span_pool,
        add_pool,
        gold_answers: sample.gold_answers.clone(),
    })
}

/// Every word the model may look up for `dataset`, plus extra texts (retrieval answers).
pub fn vocabulary_words(datasets: &[&Dataset], extra_texts: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    for ds in datasets {
        for s in &ds.samples {
            out.extend(tokenize(&s.question));
            out.extend(s.ocr_tokens.iter().map(|t| t.text.clone()));
            out.extend(s.objects.iter().flat_map(render_object));
            if let Some(d) = &s.dictionary {
                out.extend(d.iter().flat_map(|e| tokenize(e)));
            }
        }
    }
    out.extend(extra_texts.iter().flat_map(|t| tokenize(t)));
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    pub words: WordLookup,
    /// Present when questions use their own table.
    pub question_words: Option<WordLookup>,
}

impl Vocabulary {
    pub fn from_words(cfg: &RunConfig, words: &[String]) -> Self {
        let lookup = || WordLookup::from_words(words.iter().map(String::as_str), cfg.word_dim, cfg.oov_mode, cfg.num_hash_buckets);
        Self { words: lookup(), question_words: cfg.separate_question_table.then(lookup) }
    }
}

/// Graph handles for one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardVars {
    pub p_ocr: Option<Var>,
    pub p_add: Option<Var>,
    /// `1 x 3`: yes, no, unanswerable.
    pub special: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelOutput {
    pub p_ocr: Vec<f64>,
    pub p_add: Vec<f64>,
    pub special: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: RunConfig,
    pub store: ParamStore,
    pub vocab: Vocabulary,
    pub word_table: ParamId,
    pub question_table: Option<ParamId>,
    /// Excluded from optimizer updates.
    pub frozen: Vec<ParamId>,
    pub contextual: ContextualEncoder,
    pub question: QuestionEncoder,
    pub ocr: ContextEncoder,
    pub objects: ContextEncoder,
    pub relater: Relater,
    pub scorer: AnswerScorer,
}

impl Model {
    /// Builds a freshly initialized model. With `pretrained_vectors` set, the
    /// context table comes from that file and is frozen.
    pub fn new(config: &RunConfig, vocab: Vocabulary, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        match &config.pretrained_vectors {
            Some(path) => {
                let (table, _) = load_pretrained(path, config.word_dim, config.oov_mode, config.num_hash_buckets)?;
                let mut rows = table.rows;
                let scale = 1.0 / (config.word_dim as f64).sqrt();
                for r in table.lookup.vocab_len()..rows.rows() {
                    for v in rows.row_mut(r) {
                        *v = rng.gen_range(-scale..scale);
                    }
                }
                let vocab = Vocabulary { words: table.lookup, question_words: vocab.question_words };
                Self::assemble(config, vocab, rows, rng)
            }
            None => {
                let rows = Matrix::random_uniform(vocab.words.num_rows(), config.word_dim, WORD_INIT_SCALE, rng);
                Self::assemble(config, vocab, rows, rng)
            }
        }
    }

    /// Same layout as [`Model::new`] without touching the pretrained-vector
    /// file; every tensor is expected to be overwritten afterwards.
    pub fn skeleton(config: &RunConfig, vocab: Vocabulary) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let rows = Matrix::zeros(vocab.words.num_rows(), config.word_dim);
        Self::assemble(config, vocab, rows, &mut rng)
    }

    fn assemble(config: &RunConfig, vocab: Vocabulary, word_rows: Matrix, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut store = ParamStore::new();
        let dims = config.encoder_dims();
        let word_table = store.add("embed.words", word_rows);
        let question_table = vocab.question_words.as_ref().map(|q| {
            store.add("embed.question_words", Matrix::random_uniform(q.num_rows(), config.word_dim, WORD_INIT_SCALE, rng))
        });
        let contextual = ContextualEncoder::new(&mut store, "contextual", config.word_dim, config.ctx_dim, rng)?;
        let question = QuestionEncoder::new(&mut store, "question", dims, rng);
        let ocr = ContextEncoder::new(&mut store, "ocr", dims, rng);
        let objects = ContextEncoder::new(&mut store, "objects", dims, rng);
        let relater = Relater::new(&mut store, "relate", dims.output_dim(), config.attn_hidden, rng);
        let scorer = AnswerScorer::new(&mut store, "answer", dims.output_dim(), dims.hidden, config.answer_dim, rng);
        Ok(Self {
            config: config.clone(),
            store,
            vocab,
            word_table,
            question_table,
            frozen: if config.pretrained_vectors.is_some() { vec![word_table] } else { Vec::new() },
            contextual,
            question,
            ocr,
            objects,
            relater,
            scorer,
        })
    }

    fn embed(&self, g: &mut Graph, words: &[String], question: bool, dropout: &mut Option<(f64, &mut ChaCha8Rng)>) -> Var {
        let (table, lookup) = match (question, self.question_table, &self.vocab.question_words) {
            (true, Some(t), Some(l)) => (t, l),
            _ => (self.word_table, &self.vocab.words),
        };
        let t = g.param(table);
        let e = embed_words_graph(g, t, lookup, words);
        let c = self.contextual.encode(g, e);
        let x = g.concat_cols(&[e, c]);
        match dropout {
            Some((p, rng)) if *p > 0.0 => apply_dropout(g, x, *p, rng),
            _ => x,
        }
    }

    /// One forward pass. `dropout` carries the rate and RNG during training.
    pub fn forward(&self, g: &mut Graph, prep: &PreparedSample, mut dropout: Option<(f64, &mut ChaCha8Rng)>) -> Result<ForwardVars> {
        let mode = self.config.relational_mode;
        let q_in = self.embed(g, &prep.question_words, true, &mut dropout);
        let qv = self.question.encode(g, q_in);
        let u_q = qv.condensed;

        let objects = match &prep.objects {
            Some(obj) => {
                let o_in = self.embed(g, &obj.context.words, false, &mut dropout);
                let ov = self.objects.encode(g, o_in, &obj.features, &qv);
                let u_d = pool_objects(g, &obj.context, ov.output);
                let p_d = g.constant(obj.positions.clone());
                Some((u_d, p_d))
            }
            None => None,
        };

        let mut ocr_reprs = None;
        let mut p_ocr = None;
        if !prep.context.is_empty() && prep.span_pool.rows() > 0 {
            let c_in = self.embed(g, &prep.context.words, false, &mut dropout);
            let cv = self.ocr.encode(g, c_in, &prep.context.features, &qv);
            let p_o = g.constant(prep.context.positions.clone());
            let u_hat = self.relater.relate(g, mode, cv.output, p_o, objects);
            let reprs = self.scorer.candidate_reprs(g, &prep.span_pool, cv.output, u_hat);
            p_ocr = Some(self.scorer.match_ocr(g, u_q, reprs));
            ocr_reprs = Some(reprs);
        }

        let (evidence_p, evidence_reprs) = match (p_ocr, ocr_reprs) {
            (Some(p), Some(r)) => (p, r),
            _ => {
                let one = g.constant(Matrix::filled(1, 1, 1.0));
                (one, self.scorer.null_reprs(g))
            }
        };

        let mut p_add = None;
        if let Some(add) = prep.additional.as_ref().filter(|_| prep.add_pool.rows() > 0) {
            let a_in = self.embed(g, &add.words, false, &mut dropout);
            let av = self.ocr.encode(g, a_in, &add.features, &qv);
            let p_a = g.constant(add.positions.clone());
            let u_hat = self.relater.relate(g, mode, av.output, p_a, objects);
            let reprs = self.scorer.candidate_reprs(g, &prep.add_pool, av.output, u_hat);
            p_add = Some(self.scorer.reason_additional(g, u_q, evidence_p, evidence_reprs, reprs));
        }

        let special = self.scorer.special_heads(g, u_q, evidence_reprs);
        Ok(ForwardVars { p_ocr, p_add, special })
    }

    pub fn output(&self, g: &Graph, f: &ForwardVars) -> ModelOutput {
        let vals = |v: Option<Var>| v.map(|v| g.value(v).data().to_vec()).unwrap_or_default();
        let s = g.value(f.special).data();
        ModelOutput { p_ocr: vals(f.p_ocr), p_add: vals(f.p_add), special: [s[0], s[1], s[2]] }
    }

    /// Summed clamped BCE on the tape. Unreachable samples keep only the special terms.
    pub fn loss_var(&self, g: &mut Graph, f: &ForwardVars, labels: &Labels) -> Var {
        let mut parts = Vec::new();
        let mut ys = Vec::new();
        if labels.reachable {
            if let Some(p) = f.p_ocr {
                parts.push(p);
                ys.extend(&labels.ocr);
            }
            if let Some(p) = f.p_add {
                parts.push(p);
                ys.extend(&labels.additional);
            }
        }
        parts.push(f.special);
        ys.extend(labels.special);
        let probs = g.concat_cols(&parts);
        g.bce(probs, &ys, PROB_FLOOR, PROB_CEIL)
    }

    /// Loss, parameter gradients and whether the gold answer was reachable.
    pub fn loss_and_gradients(&self, prep: &PreparedSample, dropout: Option<(f64, &mut ChaCha8Rng)>) -> Result<(f64, Gradients, bool)> {
        let labels = prep.labels()?;
        let mut g = Graph::new(&self.store);
        let f = self.forward(&mut g, prep, dropout)?;
        let loss = self.loss_var(&mut g, &f, &labels);
        let mut grads = g.backward(loss);
        for &id in &self.frozen {
            grads.get_mut(id).data_mut().fill(0.0);
        }
        Ok((g.scalar(loss), grads, labels.reachable))
    }

    pub fn loss(&self, prep: &PreparedSample) -> Result<f64> {
        let labels = prep.labels()?;
        let mut g = Graph::new(&self.store);
        let f = self.forward(&mut g, prep, None)?;
        let loss = self.loss_var(&mut g, &f, &labels);
        Ok(g.scalar(loss))
    }

    pub fn scores(&self, prep: &PreparedSample) -> Result<ModelOutput> {
        let mut g = Graph::new(&self.store);
        let f = self.forward(&mut g, prep, None)?;
        Ok(self.output(&g, &f))
    }

    pub fn predict(&self, prep: &PreparedSample) -> Result<Prediction> {
        let out = self.scores(prep)?;
        Prediction::from_scores(&prep.sample_id, &prep.candidates, out.p_ocr, out.p_add, out.special)
    }

    /// Names and shapes of every tensor, in creation order.
    pub fn tensor_specs(&self) -> Vec<(String, (usize, usize))> {
        self.store.iter().map(|(_, p)| (p.name.clone(), p.value.shape())).collect()
    }
}

fn apply_dropout(g: &mut Graph, x: Var, p: f64, rng: &mut ChaCha8Rng) -> Var {
    let (r, c) = g.shape(x);
    let keep = 1.0 / (1.0 - p);
    let mask = Matrix::from_vec(r, c, (0..r * c).map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep }).collect());
    let m = g.constant(mask);
    g.mul(x, m)
}

/// Words seen in the listed dataset files and extra texts, for vocabulary building.
pub fn vocabulary_for(cfg: &RunConfig, datasets: &[&Dataset], extra_texts: &[String]) -> Vocabulary {
    Vocabulary::from_words(cfg, &vocabulary_words(datasets, extra_texts))
}
