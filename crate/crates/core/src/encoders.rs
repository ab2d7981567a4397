//! Question and context (OCR / object) encoders.
//!
//! The question runs through stacked BiLSTMs, self-attention on the top
//! layer and condensation to `u^Q`. A context is read with word-level
//! attention into the question, `K` BiLSTM layers, `K + 1` history-of-word
//! attentions, self-attention over the fused representation, and a final
//! BiLSTM whose outputs are the `u` vectors.

use rand::Rng;

use crate::attention::{attn, condense_graph, AttnParams, AttnSite};
use crate::corpus::SceneObject;
use crate::error::{Error, Result};
use crate::nn::rnn::BiLstmParams;
use crate::nn::{Graph, Matrix, ParamId, ParamStore, Var};
use crate::textprep::{TokenFeatureIds, NUM_NER, NUM_POS};

pub const POS_DIM: usize = 12;
pub const NER_DIM: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EncoderDims {
    /// Word-vector width `E`.
    pub word_dim: usize,
    /// Contextual-embedding width.
    pub ctx_dim: usize,
    /// BiLSTM output width `d_h` (half per direction).
    pub hidden: usize,
    /// Attention hidden size `k`.
    pub attn_hidden: usize,
    /// Context BiLSTM depth `K`.
    pub context_layers: usize,
    pub question_layers: usize,
}

impl EncoderDims {
    pub fn input_dim(&self) -> usize {
        self.word_dim + self.ctx_dim
    }

    /// Width of the final context vectors, `d_u = 2 d_h`.
    pub fn output_dim(&self) -> usize {
        2 * self.hidden
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("word_dim", self.word_dim),
            ("ctx_dim", self.ctx_dim),
            ("hidden", self.hidden),
            ("attn_hidden", self.attn_hidden),
            ("context_layers", self.context_layers),
            ("question_layers", self.question_layers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.hidden % 2 != 0 || self.ctx_dim % 2 != 0 {
            return Err(Error::Config("hidden and ctx_dim must be even (split across two directions)".into()));
        }
        Ok(())
    }

    fn how_dim(&self, level: usize) -> usize {
        self.input_dim() + (level - 1) * self.hidden
    }

    fn fused_dim(&self) -> usize {
        self.how_dim(self.context_layers + 1) + (self.context_layers + 1) * self.hidden
    }
}

#[derive(Clone, Debug)]
pub struct QuestionEncoder {
    pub layers: Vec<BiLstmParams>,
    pub self_attn: AttnSite,
    pub pool: ParamId,
    pub dims: EncoderDims,
}

/// Tape handles for an encoded question.
#[derive(Clone, Debug)]
pub struct QuestionVars {
    /// `w^Q = [g; b]`.
    pub inputs: Var,
    pub levels: Vec<Var>,
    pub attended: Var,
    /// `u^Q`, `1 x d_h`.
    pub condensed: Var,
}

impl QuestionVars {
    /// Level `k` (1-based), capped at the top question layer.
    fn level(&self, k: usize) -> Var {
        self.levels[k.min(self.levels.len()) - 1]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuestionEncoding {
    pub inputs: Matrix,
    pub levels: Vec<Matrix>,
    pub attended: Matrix,
    pub condensed: Vec<f64>,
}

impl QuestionEncoder {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, dims: EncoderDims, rng: &mut R) -> Self {
        let mut layers = Vec::with_capacity(dims.question_layers);
        for l in 0..dims.question_layers {
            let input = if l == 0 { dims.input_dim() } else { dims.hidden };
            layers.push(BiLstmParams::new(store, &format!("{prefix}.lstm{l}"), input, dims.hidden / 2, rng));
        }
        let self_attn = AttnSite::new(store, &format!("{prefix}.self_attn"), dims.hidden, dims.attn_hidden, rng);
        let pool = store.add(format!("{prefix}.pool"), Matrix::random_uniform(1, dims.hidden, 1.0 / (dims.hidden as f64).sqrt(), rng));
        Self { layers, self_attn, pool, dims }
    }

    /// `inputs` is `q x (E + ctx_dim)`, `q >= 1`.
    pub fn encode(&self, g: &mut Graph, inputs: Var) -> QuestionVars {
        let mut levels = Vec::with_capacity(self.layers.len());
        let mut x = inputs;
        for layer in &self.layers {
            x = layer.run(g, x);
            levels.push(x);
        }
        let attended = self.self_attn.apply(g, x, x, x);
        let w = g.param(self.pool);
        let condensed = condense_graph(g, attended, w);
        QuestionVars { inputs, levels, attended, condensed }
    }

    pub fn encode_matrix(&self, store: &ParamStore, inputs: &Matrix) -> Result<QuestionEncoding> {
        if inputs.rows() == 0 {
            return Err(Error::Empty("question has no words"));
        }
        check_cols("question inputs", inputs, self.dims.input_dim())?;
        let mut g = Graph::new(store);
        let x = g.constant(inputs.clone());
        let v = self.encode(&mut g, x);
        Ok(QuestionEncoding {
            inputs: inputs.clone(),
            levels: v.levels.iter().map(|&l| g.value(l).clone()).collect(),
            attended: g.value(v.attended).clone(),
            condensed: g.value(v.condensed).data().to_vec(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct ContextEncoder {
    pub word_attn: AttnSite,
    pub pos_table: ParamId,
    pub ner_table: ParamId,
    pub layers: Vec<BiLstmParams>,
    pub multilevel: Vec<AttnSite>,
    pub self_attn: AttnSite,
    pub final_rnn: BiLstmParams,
    pub dims: EncoderDims,
}

#[derive(Clone, Debug)]
pub struct ContextVars {
    pub inputs: Var,
    pub word_attended: Var,
    pub levels: Vec<Var>,
    pub multilevel: Vec<Var>,
    pub self_attended: Var,
    /// `u`, `m x d_u`.
    pub output: Var,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContextEncoding {
    pub inputs: Matrix,
    pub word_attended: Matrix,
    pub levels: Vec<Matrix>,
    pub multilevel: Vec<Matrix>,
    pub self_attended: Matrix,
    pub output: Matrix,
}

impl ContextEncoder {
    pub fn new<R: Rng>(store: &mut ParamStore, prefix: &str, dims: EncoderDims, rng: &mut R) -> Self {
        let e = dims.input_dim();
        let word_attn = AttnSite::new(store, &format!("{prefix}.word_attn"), e, dims.attn_hidden, rng);
        let pos_table = store.add(format!("{prefix}.pos_embed"), Matrix::random_uniform(NUM_POS, POS_DIM, 0.5, rng));
        let ner_table = store.add(format!("{prefix}.ner_embed"), Matrix::random_uniform(NUM_NER, NER_DIM, 0.5, rng));
        let mut layers = Vec::with_capacity(dims.context_layers);
        for l in 0..dims.context_layers {
            let input = if l == 0 { 2 * e + POS_DIM + NER_DIM } else { dims.hidden };
            layers.push(BiLstmParams::new(store, &format!("{prefix}.lstm{l}"), input, dims.hidden / 2, rng));
        }
        let multilevel = (1..=dims.context_layers + 1)
            .map(|k| AttnSite::new(store, &format!("{prefix}.how_attn{k}"), dims.how_dim(k), dims.attn_hidden, rng))
            .collect();
        let fused = dims.fused_dim();
        let self_attn = AttnSite::new(store, &format!("{prefix}.self_attn"), fused, dims.attn_hidden, rng);
        let final_rnn = BiLstmParams::new(store, &format!("{prefix}.final"), 2 * fused, dims.hidden, rng);
        Self { word_attn, pos_table, ner_table, layers, multilevel, self_attn, final_rnn, dims }
    }

    /// `inputs` is `m x (E + ctx_dim)` with `m >= 1` and one feature pair per row.
    pub fn encode(&self, g: &mut Graph, inputs: Var, features: &[TokenFeatureIds], q: &QuestionVars) -> ContextVars {
        let word_attended = self.word_attn.apply(g, inputs, q.inputs, q.inputs);
        let pos_ids: Vec<usize> = features.iter().map(|f| f.pos_id).collect();
        let ner_ids: Vec<usize> = features.iter().map(|f| f.ner_id).collect();
        let pos_table = g.param(self.pos_table);
        let ner_table = g.param(self.ner_table);
        let pos = g.gather_rows(pos_table, &pos_ids);
        let ner = g.gather_rows(ner_table, &ner_ids);
        let h0 = g.concat_cols(&[inputs, word_attended, pos, ner]);

        let mut levels = Vec::with_capacity(self.layers.len());
        let mut x = h0;
        for layer in &self.layers {
            x = layer.run(g, x);
            levels.push(x);
        }

        let mut how_c = vec![inputs];
        let mut how_q = vec![q.inputs];
        let mut multilevel = Vec::with_capacity(self.multilevel.len());
        for (i, site) in self.multilevel.iter().enumerate() {
            let k = i + 1;
            if k > 1 {
                how_c.push(levels[k - 2]);
                how_q.push(q.level(k - 1));
            }
            let hc = g.concat_cols(&how_c);
            let hq = g.concat_cols(&how_q);
            multilevel.push(site.apply(g, hc, hq, q.level(k)));
        }

        let mut fused_parts = how_c;
        fused_parts.extend(&multilevel);
        let fused = g.concat_cols(&fused_parts);
        let self_attended = self.self_attn.apply(g, fused, fused, fused);
        let final_in = g.concat_cols(&[fused, self_attended]);
        let output = self.final_rnn.run(g, final_in);
        ContextVars { inputs, word_attended, levels, multilevel, self_attended, output }
    }

    pub fn encode_matrix(
        &self,
        store: &ParamStore,
        inputs: &Matrix,
        features: &[TokenFeatureIds],
        question: &QuestionEncoder,
        question_inputs: &Matrix,
    ) -> Result<ContextEncoding> {
        if inputs.rows() == 0 {
            return Err(Error::Empty("context has no words"));
        }
        if question_inputs.rows() == 0 {
            return Err(Error::Empty("question has no words"));
        }
        check_cols("context inputs", inputs, self.dims.input_dim())?;
        check_cols("question inputs", question_inputs, self.dims.input_dim())?;
        check_features(features, inputs.rows())?;
        let mut g = Graph::new(store);
        let qx = g.constant(question_inputs.clone());
        let qv = question.encode(&mut g, qx);
        let x = g.constant(inputs.clone());
        let v = self.encode(&mut g, x, features, &qv);
        let get = |vars: &[Var]| vars.iter().map(|&l| g.value(l).clone()).collect::<Vec<_>>();
        Ok(ContextEncoding {
            inputs: inputs.clone(),
            word_attended: g.value(v.word_attended).clone(),
            levels: get(&v.levels),
            multilevel: get(&v.multilevel),
            self_attended: g.value(v.self_attended).clone(),
            output: g.value(v.output).clone(),
        })
    }
}

fn check_cols(what: &str, m: &Matrix, cols: usize) -> Result<()> {
    if m.cols() != cols {
        return Err(Error::Shape(format!("{what} have {} columns, expected {cols}", m.cols())));
    }
    Ok(())
}

pub(crate) fn check_features(features: &[TokenFeatureIds], rows: usize) -> Result<()> {
    if features.len() != rows {
        return Err(Error::Shape(format!("{} feature ids for {rows} words", features.len())));
    }
    if features.iter().any(|f| f.pos_id >= NUM_POS || f.ner_id >= NUM_NER) {
        return Err(Error::invalid("features", "POS/NER id out of range"));
    }
    Ok(())
}

/// `Attn(w^C, w^Q, w^Q)`.
pub fn word_level_attention(context_w: &Matrix, question_w: &Matrix, params: &AttnParams) -> Result<Matrix> {
    if question_w.rows() == 0 {
        return Err(Error::Empty("word-level attention needs a non-empty question"));
    }
    attn(context_w, question_w, question_w, params)
}

/// Object words laid out as one context, with the owning object of each word.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ObjectContext {
    pub words: Vec<String>,
    pub owner: Vec<usize>,
    pub num_objects: usize,
}

impl ObjectContext {
    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// `n x L` averaging matrix: row `j` holds `1 / len_j` at object `j`'s word positions.
    pub fn pooling_matrix(&self) -> Matrix {
        let mut counts = vec![0usize; self.num_objects];
        for &o in &self.owner {
            counts[o] += 1;
        }
        let mut m = Matrix::zeros(self.num_objects, self.words.len());
        for (i, &o) in self.owner.iter().enumerate() {
            m.set(o, i, 1.0 / counts[o] as f64);
        }
        m
    }
}

/// `[attributes..., name]` per object, split on whitespace. Objects whose
/// rendering is empty fall back to the single word `object`.
pub fn render_object(object: &SceneObject) -> Vec<String> {
    let mut words: Vec<String> = object
        .attributes
        .iter()
        .chain(std::iter::once(&object.name))
        .flat_map(|s| s.split_whitespace())
        .map(str::to_string)
        .collect();
    if words.is_empty() {
        words.push("object".into());
    }
    words
}

pub fn object_context(objects: &[SceneObject]) -> ObjectContext {
    let mut ctx = ObjectContext { num_objects: objects.len(), ..Default::default() };
    for (j, obj) in objects.iter().enumerate() {
        for w in render_object(obj) {
            ctx.words.push(w);
            ctx.owner.push(j);
        }
    }
    ctx
}

/// Per-object vectors `u^D` (`n x d_u`) from the encoded object context.
pub fn pool_objects(g: &mut Graph, ctx: &ObjectContext, encoded: Var) -> Var {
    let p = g.constant(ctx.pooling_matrix());
    g.matmul(p, encoded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Quad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dims() -> EncoderDims {
        EncoderDims { word_dim: 4, ctx_dim: 4, hidden: 6, attn_hidden: 3, context_layers: 2, question_layers: 3 }
    }

    fn feats(n: usize) -> Vec<TokenFeatureIds> {
        (0..n).map(|i| TokenFeatureIds { pos_id: i % NUM_POS, ner_id: i % NUM_NER }).collect()
    }

    #[test]
    fn shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut store = ParamStore::new();
        let d = dims();
        let qe = QuestionEncoder::new(&mut store, "q", d, &mut rng);
        let ce = ContextEncoder::new(&mut store, "c", d, &mut rng);
        let q = Matrix::random_uniform(3, 8, 1.0, &mut rng);
        let c = Matrix::random_uniform(4, 8, 1.0, &mut rng);
        let qenc = qe.encode_matrix(&store, &q).unwrap();
        assert_eq!(qenc.levels.len(), 3);
        assert!(qenc.levels.iter().all(|l| l.shape() == (3, 6)));
        assert_eq!(qenc.condensed.len(), 6);
        let cenc = ce.encode_matrix(&store, &c, &feats(4), &qe, &q).unwrap();
        assert_eq!(cenc.output.shape(), (4, d.output_dim()));
        assert_eq!(cenc.multilevel.len(), 3);
        assert!(cenc.output.is_finite());
    }

    #[test]
    fn single_word_question_condenses_to_its_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut store = ParamStore::new();
        let qe = QuestionEncoder::new(&mut store, "q", dims(), &mut rng);
        let q = Matrix::random_uniform(1, 8, 1.0, &mut rng);
        let enc = qe.encode_matrix(&store, &q).unwrap();
        assert_eq!(enc.attended, enc.levels[2]);
        assert_eq!(enc.condensed, enc.levels[2].row(0));
    }

    #[test]
    fn single_token_context_self_attention_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut store = ParamStore::new();
        let d = dims();
        let qe = QuestionEncoder::new(&mut store, "q", d, &mut rng);
        let ce = ContextEncoder::new(&mut store, "c", d, &mut rng);
        let q = Matrix::random_uniform(2, 8, 1.0, &mut rng);
        let c = Matrix::random_uniform(1, 8, 1.0, &mut rng);
        let enc = ce.encode_matrix(&store, &c, &feats(1), &qe, &q).unwrap();
        let fused: Vec<&Matrix> =
            std::iter::once(&enc.inputs).chain(enc.levels.iter()).chain(enc.multilevel.iter()).collect();
        assert_eq!(enc.self_attended, Matrix::concat_cols(&fused));
    }

    #[test]
    fn question_level_cap_allows_deep_context() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut store = ParamStore::new();
        let d = EncoderDims { context_layers: 4, question_layers: 2, ..dims() };
        let qe = QuestionEncoder::new(&mut store, "q", d, &mut rng);
        let ce = ContextEncoder::new(&mut store, "c", d, &mut rng);
        let q = Matrix::random_uniform(2, 8, 1.0, &mut rng);
        let c = Matrix::random_uniform(3, 8, 1.0, &mut rng);
        let enc = ce.encode_matrix(&store, &c, &feats(3), &qe, &q).unwrap();
        assert_eq!(enc.multilevel.len(), 5);
    }

    #[test]
    fn errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut store = ParamStore::new();
        let d = dims();
        let qe = QuestionEncoder::new(&mut store, "q", d, &mut rng);
        let ce = ContextEncoder::new(&mut store, "c", d, &mut rng);
        let q = Matrix::random_uniform(2, 8, 1.0, &mut rng);
        assert!(matches!(qe.encode_matrix(&store, &Matrix::zeros(0, 8)), Err(Error::Empty(_))));
        assert!(matches!(ce.encode_matrix(&store, &Matrix::zeros(0, 8), &[], &qe, &q), Err(Error::Empty(_))));
        assert!(ce.encode_matrix(&store, &Matrix::zeros(2, 8), &feats(1), &qe, &q).is_err());
        assert!(matches!(qe.encode_matrix(&store, &Matrix::zeros(2, 7)), Err(Error::Shape(_))));
        let p = AttnParams::new(Matrix::identity(2), vec![1.0, 1.0]).unwrap();
        assert!(word_level_attention(&Matrix::zeros(2, 2), &Matrix::zeros(0, 2), &p).is_err());
    }

    #[test]
    fn word_level_single_question_word() {
        let p = AttnParams::new(Matrix::from_rows(&[vec![0.3, 1.0], vec![-0.7, 0.2]]), vec![0.4, 2.0]).unwrap();
        let c = Matrix::from_rows(&[vec![1.0, 2.0], vec![-1.0, 0.5]]);
        let q = Matrix::from_rows(&[vec![0.25, -4.0]]);
        let out = word_level_attention(&c, &q, &p).unwrap();
        assert_eq!(out.row(0), q.row(0));
        assert_eq!(out.row(1), q.row(0));
    }

    #[test]
    fn object_rendering() {
        let quad = Quad::from_rect(0.0, 0.0, 1.0, 1.0);
        let bus = SceneObject { name: "bus".into(), attributes: vec!["red".into()], quad };
        assert_eq!(render_object(&bus), ["red", "bus"]);
        let cup = SceneObject { name: "cup".into(), attributes: vec!["white".into()], quad };
        let ctx = object_context(&[bus, cup]);
        assert_eq!(ctx.words.len(), 4);
        assert_eq!(ctx.owner, [0, 0, 1, 1]);
        let p = ctx.pooling_matrix();
        assert_eq!(p.shape(), (2, 4));
        assert_eq!(p.row(0), [0.5, 0.5, 0.0, 0.0]);
        assert!(object_context(&[]).is_empty());
    }
}
