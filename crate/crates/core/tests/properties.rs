mod common;

use proptest::prelude::*;

use common::{lev_oracle, token};
use stqa::attention::{attn_weights, condense_weights, AttnParams, PoolParams};
use stqa::corpus::{OcrToken, Sample};
use stqa::metrics::{anls_score, levenshtein, normalized_levenshtein, vqa_score, MetricsConfig};
use stqa::nn::Matrix;
use stqa::textprep::{compute_reading_order, generate_candidates, CandidateKind};

fn word() -> impl Strategy<Value = String> {
    "[a-dé ]{0,12}"
}

fn matrix(rows: usize, cols: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec(-5.0f64..5.0, rows * cols).prop_map(move |v| Matrix::from_vec(rows, cols, v))
}

fn layout() -> impl Strategy<Value = Vec<OcrToken>> {
    prop::collection::vec((20.0f64..980.0, 20.0f64..980.0, 8.0f64..40.0), 0..10)
        .prop_map(|pts| pts.into_iter().enumerate().map(|(i, (x, y, h))| token(&format!("w{i}"), x, y, h)).collect())
}

fn scene(tokens: Vec<OcrToken>) -> Sample {
    common::sample("p-1", "what is it?", &["w0"], tokens, vec![])
}

proptest! {
    #[test]
    fn levenshtein_is_a_metric(a in word(), b in word(), c in word()) {
        let ab = levenshtein(&a, &b);
        prop_assert_eq!(ab, lev_oracle(&a, &b));
        prop_assert_eq!(ab, levenshtein(&b, &a));
        prop_assert_eq!(levenshtein(&a, &a), 0);
        prop_assert!(levenshtein(&a, &c) <= ab + levenshtein(&b, &c));
        prop_assert!(ab <= a.chars().count().max(b.chars().count()));
        prop_assert!(ab >= a.chars().count().abs_diff(b.chars().count()));
    }

    #[test]
    fn scores_stay_in_range(a in word(), gold in prop::collection::vec(word(), 1..4)) {
        let cfg = MetricsConfig::default();
        let nl = normalized_levenshtein(&a, &gold[0]);
        prop_assert!((0.0..=1.0).contains(&nl));
        let s = anls_score(&a, &gold, &cfg);
        prop_assert!(s == 0.0 || (0.5..=1.0).contains(&s), "score {}", s);
        prop_assert_eq!(anls_score(&gold[0], &gold, &cfg), 1.0);
        let v = vqa_score(&a, &gold, &cfg);
        prop_assert!([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0].contains(&v));
    }

    #[test]
    fn attention_rows_are_distributions((m, n, d, k) in (1usize..5, 1usize..7, 1usize..5, 1usize..4), seed in any::<u64>()) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut rand_m = |r: usize, c: usize, s: f64| Matrix::from_vec(r, c, (0..r * c).map(|_| rng.gen_range(-s..s)).collect());
        let a = rand_m(m, d, 50.0);
        let b = rand_m(n, d, 50.0);
        let u = rand_m(d, k, 3.0);
        let diag = rand_m(1, k, 3.0).into_vec();
        let w = attn_weights(&a, &b, &AttnParams::new(u, diag).unwrap()).unwrap();
        prop_assert_eq!(w.shape(), (m, n));
        for r in 0..m {
            prop_assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(w.row(r).iter().all(|x| (0.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn pooling_weights_are_a_distribution(h in matrix(4, 3), w in prop::collection::vec(-20.0f64..20.0, 3)) {
        let beta = condense_weights(&h, &PoolParams { w }).unwrap();
        prop_assert!((beta.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn candidate_count_law(tokens in layout(), a in 0usize..5) {
        let n = tokens.len();
        let s = scene(tokens);
        let order = compute_reading_order(&s.ocr_tokens, 1000.0, 1000.0);
        let extra: Vec<String> = (0..a).map(|i| format!("Additional {i}")).collect();
        let cands = generate_candidates(&s, &order, &extra).unwrap();
        prop_assert_eq!(cands.len(), n + n.saturating_sub(1) + a + 3);
        for c in cands.iter().filter(|c| c.kind == CandidateKind::OcrSpan) {
            let words: Vec<&str> = c.token_indices.iter().map(|&i| s.ocr_tokens[i].text.as_str()).collect();
            prop_assert_eq!(&c.text, &words.join(" "));
            if let [i, j] = c.token_indices[..] {
                let pi = order.order.iter().position(|&t| t == i).unwrap();
                prop_assert_eq!(order.order[pi + 1], j);
            }
        }
        let tail: Vec<CandidateKind> = cands[cands.len() - 3..].iter().map(|c| c.kind).collect();
        prop_assert_eq!(tail, vec![CandidateKind::Yes, CandidateKind::No, CandidateKind::Unanswerable]);
    }

    #[test]
    fn reading_order_is_a_permutation_and_scale_free(tokens in layout(), sx in 0.1f64..10.0, sy in 0.1f64..10.0) {
        let n = tokens.len();
        let base = compute_reading_order(&tokens, 1000.0, 1000.0);
        prop_assert!(base.is_valid_for(n));
        let scaled: Vec<OcrToken> = tokens.iter().map(|t| OcrToken { text: t.text.clone(), quad: t.quad.scaled(sx, sy) }).collect();
        prop_assert_eq!(compute_reading_order(&scaled, 1000.0 * sx, 1000.0 * sy).order, base.order);
    }

    #[test]
    fn reading_order_ignores_input_order(tokens in layout(), rot in 0usize..10) {
        let n = tokens.len();
        prop_assume!(n > 0);
        let base: Vec<String> = compute_reading_order(&tokens, 1000.0, 1000.0).order.iter().map(|&i| tokens[i].text.clone()).collect();
        let mut rotated = tokens.clone();
        rotated.rotate_left(rot % n);
        let again: Vec<String> = compute_reading_order(&rotated, 1000.0, 1000.0).order.iter().map(|&i| rotated[i].text.clone()).collect();
        // Equal center-y or center-x values would make ties depend on input order.
        let distinct = {
            let mut ys: Vec<f64> = tokens.iter().map(|t| t.quad.center().1).collect();
            let mut xs: Vec<f64> = tokens.iter().map(|t| t.quad.center().0).collect();
            ys.sort_by(f64::total_cmp);
            xs.sort_by(f64::total_cmp);
            ys.windows(2).all(|w| w[0] < w[1]) && xs.windows(2).all(|w| w[0] < w[1])
        };
        prop_assume!(distinct);
        prop_assert_eq!(again, base);
    }
}
