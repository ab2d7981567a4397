mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{attn_oracle, max_abs_diff, matrix, random_rows, Rows};
use stqa::corpus::{Quad, SceneObject};
use stqa::encoders::{object_context, render_object, word_level_attention, ContextEncoder, EncoderDims, QuestionEncoder};
use stqa::nn::{Matrix, ParamStore};
use stqa::textprep::{TokenFeatureIds, NUM_NER, NUM_POS};

fn dims() -> EncoderDims {
    EncoderDims { word_dim: 5, ctx_dim: 4, hidden: 6, attn_hidden: 3, context_layers: 2, question_layers: 2 }
}

struct Fixture {
    store: ParamStore,
    question: QuestionEncoder,
    context: ContextEncoder,
}

fn fixture(seed: u64) -> Fixture {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let question = QuestionEncoder::new(&mut store, "q", dims(), &mut rng);
    let context = ContextEncoder::new(&mut store, "c", dims(), &mut rng);
    Fixture { store, question, context }
}

fn feats(n: usize) -> Vec<TokenFeatureIds> {
    (0..n).map(|i| TokenFeatureIds { pos_id: (3 * i) % NUM_POS, ner_id: i % NUM_NER }).collect()
}

fn rows_of(m: &Matrix) -> Rows {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

#[test]
fn word_level_attention_matches_loop_oracle() {
    let f = fixture(1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let params = f.context.word_attn.params(&f.store);
    let u = rows_of(f.store.get(f.context.word_attn.u));
    let d = f.store.get(f.context.word_attn.diag).row(0).to_vec();
    for (m, q) in [(1, 1), (4, 3), (7, 9)] {
        let c = random_rows(&mut rng, m, dims().input_dim());
        let qw = random_rows(&mut rng, q, dims().input_dim());
        let got = word_level_attention(&matrix(&c), &matrix(&qw), &params).unwrap();
        let (_, want) = attn_oracle(&c, &qw, &qw, &u, &d);
        assert!(max_abs_diff(&want, &got) < 1e-12);
    }
    let empty = Matrix::zeros(0, dims().input_dim());
    assert!(word_level_attention(&matrix(&random_rows(&mut rng, 2, dims().input_dim())), &empty, &params).is_err());
}

#[test]
fn encodings_have_the_documented_shapes() {
    let f = fixture(3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let q = matrix(&random_rows(&mut rng, 3, dims().input_dim()));
    let c = matrix(&random_rows(&mut rng, 5, dims().input_dim()));
    let qe = f.question.encode_matrix(&f.store, &q).unwrap();
    assert_eq!(qe.levels.len(), dims().question_layers);
    assert!(qe.levels.iter().all(|l| l.shape() == (3, dims().hidden)));
    assert_eq!(qe.condensed.len(), dims().hidden);

    let ce = f.context.encode_matrix(&f.store, &c, &feats(5), &f.question, &q).unwrap();
    assert_eq!(ce.word_attended.shape(), (5, dims().input_dim()));
    assert_eq!(ce.levels.len(), dims().context_layers);
    assert_eq!(ce.multilevel.len(), dims().context_layers + 1);
    assert!(ce.multilevel.iter().all(|l| l.shape() == (5, dims().hidden)));
    assert_eq!(ce.output.shape(), (5, dims().output_dim()));
    assert!(ce.output.data().iter().all(|v| v.is_finite()));
}

#[test]
fn context_encoding_is_bidirectional_and_question_aware() {
    let f = fixture(5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let q = matrix(&random_rows(&mut rng, 4, dims().input_dim()));
    let mut c_rows = random_rows(&mut rng, 6, dims().input_dim());
    let base = f.context.encode_matrix(&f.store, &matrix(&c_rows), &feats(6), &f.question, &q).unwrap();

    // Perturbing the last word reaches the first output row.
    c_rows[5][0] += 0.5;
    let moved = f.context.encode_matrix(&f.store, &matrix(&c_rows), &feats(6), &f.question, &q).unwrap();
    assert!((0..base.output.cols()).any(|j| base.output.get(0, j) != moved.output.get(0, j)));

    // A different question changes every context row.
    c_rows[5][0] -= 0.5;
    let q2 = matrix(&random_rows(&mut rng, 2, dims().input_dim()));
    let other = f.context.encode_matrix(&f.store, &matrix(&c_rows), &feats(6), &f.question, &q2).unwrap();
    for r in 0..6 {
        assert_ne!(base.output.row(r), other.output.row(r));
    }
}

#[test]
fn construction_is_seeded() {
    assert_eq!(fixture(7).store, fixture(7).store);
    assert_ne!(fixture(7).store, fixture(8).store);
}

#[test]
fn bad_inputs_are_rejected() {
    let f = fixture(9);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let q = matrix(&random_rows(&mut rng, 2, dims().input_dim()));
    let c = matrix(&random_rows(&mut rng, 3, dims().input_dim()));
    let narrow = matrix(&random_rows(&mut rng, 3, dims().input_dim() - 1));
    assert!(f.question.encode_matrix(&f.store, &Matrix::zeros(0, dims().input_dim())).is_err());
    assert!(f.question.encode_matrix(&f.store, &narrow).is_err());
    assert!(f.context.encode_matrix(&f.store, &c, &feats(2), &f.question, &q).is_err());
    assert!(f.context.encode_matrix(&f.store, &narrow, &feats(3), &f.question, &q).is_err());
    let mut bad = feats(3);
    bad[1].pos_id = NUM_POS;
    assert!(f.context.encode_matrix(&f.store, &c, &bad, &f.question, &q).is_err());
    let bad_dims = EncoderDims { hidden: 5, ..dims() };
    assert!(bad_dims.validate().is_err());
    assert!(EncoderDims { context_layers: 0, ..dims() }.validate().is_err());
}

#[test]
fn objects_render_and_pool_by_owner() {
    let quad = Quad::from_rect(0.0, 0.0, 10.0, 10.0);
    let objects = vec![
        SceneObject { name: "bus".into(), attributes: vec!["red".into(), "double decker".into()], quad },
        SceneObject { name: "".into(), attributes: vec![], quad },
        SceneObject { name: "sign".into(), attributes: vec![], quad },
    ];
    assert_eq!(render_object(&objects[0]), ["red", "double", "decker", "bus"]);
    assert_eq!(render_object(&objects[1]), ["object"]);
    let ctx = object_context(&objects);
    assert_eq!(ctx.words, ["red", "double", "decker", "bus", "object", "sign"]);
    assert_eq!(ctx.owner, [0, 0, 0, 0, 1, 2]);
    let p = ctx.pooling_matrix();
    assert_eq!(p.shape(), (3, 6));
    for r in 0..3 {
        assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }
    assert_eq!(p.row(0), [0.25, 0.25, 0.25, 0.25, 0.0, 0.0]);
    assert!(object_context(&[]).is_empty());
}
