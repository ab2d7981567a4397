use stqa::corpus::{generate_synthetic, SyntheticConfig};
use stqa::retrieval::{build_index, parse_qa_pairs, qa_pairs_from_dataset, QaPair};

fn pairs() -> Vec<QaPair> {
    [("where is the bus stop", "main street"), ("what color is the bus", "red"), ("stop sign", "stop")]
        .iter()
        .map(|(q, a)| QaPair { question: q.to_string(), answer: a.to_string() })
        .collect()
}

// N = 3, avgdl = 4, df(bus) = df(stop) = 2, so idf = ln(1 + 1.5 / 2.5) = ln 1.6.
// Doc 0 (5 terms): both terms, each idf * 2.2 / (1 + 1.2 * (0.25 + 0.75 * 5 / 4)).
// Doc 1 (5 terms): "bus" only. Doc 2 (2 terms): "stop" with length norm 1.2 * (0.25 + 0.75 * 2 / 4).
const EXPECTED: [f64; 3] = [0.8527900901778297, 0.42639504508891485, 0.5908617053374963];

#[test]
fn bm25_matches_hand_computation() {
    let idx = build_index(&pairs()).unwrap();
    let scores = idx.scores("Bus stop?");
    for (s, e) in scores.iter().zip(EXPECTED) {
        assert!((s - e).abs() < 1e-12, "{s} vs {e}");
    }
    assert_eq!(idx.scores("bus bus stop stop"), scores, "repeated query terms count once");
    assert!(idx.scores("zebra").iter().all(|&s| s == 0.0));
}

#[test]
fn retrieve_ranks_and_deduplicates() {
    let mut p = pairs();
    p.push(QaPair { question: "bus stop where".into(), answer: "Main  Street".into() });
    let idx = build_index(&p).unwrap();
    // The shorter added question ranks first; its answer is returned verbatim
    // and the normalized duplicate from doc 0 is dropped.
    assert_eq!(idx.retrieve("bus stop", 10), vec!["Main  Street", "stop", "red"]);
    assert_eq!(idx.retrieve("bus stop", 1), vec!["Main  Street"]);
    assert!(idx.retrieve("zebra", 5).is_empty());
    assert!(idx.retrieve("bus", 0).is_empty());
}

#[test]
fn corpus_round_trip_and_from_dataset() {
    let ds = generate_synthetic(SyntheticConfig { num_samples: 12, vocab_size: 20, seed: 1 }).unwrap();
    let from_ds = qa_pairs_from_dataset(&ds);
    assert_eq!(from_ds.len(), 12);
    let text: String = from_ds.iter().map(|p| serde_json::to_string(p).unwrap() + "\n").collect();
    assert_eq!(parse_qa_pairs(&text).unwrap(), from_ds);
    assert!(parse_qa_pairs("{\"question\": 1}\n").is_err());
}
