use mechlab::embed::{train_cbow, CbowConfig, WordEmbeddings};
use mechlab::synthdata::{gen_relational, DEFAULT_PAIRS};
use proptest::prelude::*;

fn cos(a: &[f32], b: &[f32]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    let n = |v: &[f32]| v.iter().map(|&x| f64::from(x).powi(2)).sum::<f64>().sqrt();
    dot / (n(a) * n(b))
}

#[test]
fn kitten_completes_the_analogy_across_seeds() {
    let mut hits = 0;
    let mut report = Vec::new();
    for seed in 0..10 {
        let corpus = gen_relational(&DEFAULT_PAIRS, 20, seed).unwrap();
        let (e, _) = train_cbow(&corpus, &CbowConfig { seed, ..CbowConfig::default() }).unwrap();
        let top = e.analogy("dog", "puppy", "cat", 2).unwrap();
        if top.iter().any(|(w, _)| w == "kitten") {
            hits += 1;
        }
        report.push(top);
    }
    assert!(hits >= 9, "kitten in top 2 for {hits}/10 seeds: {report:?}");
}

#[test]
fn interchangeable_words_get_matching_codes() {
    let corpus = gen_relational(&DEFAULT_PAIRS, 20, 4).unwrap().with_synonym("dog", "hound").unwrap();
    let (e, _) = train_cbow(&corpus, &CbowConfig { seed: 4, ..CbowConfig::default() }).unwrap();
    let c = cos(e.vector("dog").unwrap(), e.vector("hound").unwrap());
    assert!(c >= 0.9, "cosine {c}");
}

#[test]
fn nearest_returns_the_word_itself_first() {
    let corpus = gen_relational(&DEFAULT_PAIRS, 20, 2).unwrap();
    let (e, _) = train_cbow(&corpus, &CbowConfig { epochs: 3, seed: 2, ..CbowConfig::default() }).unwrap();
    for w in e.vocab.words() {
        let q: Vec<f64> = e.vector(w).unwrap().iter().map(|&x| f64::from(x)).collect();
        let top = e.nearest(&q, 1, &[]).unwrap();
        assert_eq!(&top[0].0, w);
        assert!((top[0].1 - 1.0).abs() < 1e-12);
        assert_ne!(&e.nearest(&q, 1, &[w.as_str()]).unwrap()[0].0, w);
    }
}

proptest! {
    #[test]
    fn ranking_ignores_positive_query_scale(
        rows in prop::collection::vec(prop::collection::vec(-4i32..=4, 3), 2..8),
        query in prop::collection::vec(-4i32..=4, 3),
        exp in -6i32..=6,
    ) {
        prop_assume!(query.iter().any(|&q| q != 0));
        let names: Vec<String> = (0..rows.len()).map(|i| format!("w{i}")).collect();
        let codes: Vec<Vec<f32>> = rows.iter().map(|r| r.iter().map(|&x| x as f32).collect()).collect();
        let table: Vec<(&str, &[f32])> = names.iter().map(String::as_str).zip(codes.iter().map(Vec::as_slice)).collect();
        let e = WordEmbeddings::from_rows(&table).unwrap();
        let q: Vec<f64> = query.iter().map(|&x| f64::from(x)).collect();
        let scaled: Vec<f64> = q.iter().map(|&x| x * 2f64.powi(exp)).collect();
        let k = rows.len();
        let a: Vec<String> = e.nearest(&q, k, &[]).unwrap().into_iter().map(|r| r.0).collect();
        let b: Vec<String> = e.nearest(&scaled, k, &[]).unwrap().into_iter().map(|r| r.0).collect();
        prop_assert_eq!(a, b);
    }
}
