mod common;

use common::{bm25_reference, bm25_reference_top_k, random_corpus, random_query, rankings_agree};
use lexlink::bm25::{Bm25Index, Bm25Params};
use lexlink::tokenizer::TokenStream;
use proptest::prelude::*;

fn streams(docs: &[Vec<String>]) -> Vec<TokenStream> {
    docs.iter().map(|d| TokenStream::from_tokens(d.clone())).collect()
}

fn words(s: &[&str]) -> Vec<String> {
    s.iter().map(|w| w.to_string()).collect()
}

fn engine_top_k(index: &Bm25Index, q: &[String], k: usize) -> Vec<(usize, f64)> {
    index
        .top_k(&TokenStream::from_tokens(q.to_vec()), k)
        .into_iter()
        .map(|h| (h.doc_index, h.score))
        .collect()
}

#[test]
fn frozen_three_doc_scores() {
    let docs = vec![words(&["apple", "pie"]), words(&["apple"]), words(&["banana"])];
    let index = Bm25Index::build(&streams(&docs), Bm25Params::default());
    let q = TokenStream::from_tokens(["apple"]);

    assert!((index.idf("apple") - 0.47000362924573563).abs() < 1e-12);
    assert!((index.score(&q, 1).unwrap() - 0.5295815540797021).abs() < 1e-12);
    assert!((index.score(&q, 0).unwrap() - 0.3836764320373352).abs() < 1e-12);
    assert_eq!(index.score(&q, 2).unwrap(), 0.0);

    let top: Vec<usize> = index.top_k(&q, 10).iter().map(|h| h.doc_index).collect();
    assert_eq!(top, vec![1, 0]);
}

#[test]
fn fifty_doc_corpus_matches_reference() {
    let mut rng = common::rng(3);
    let docs: Vec<Vec<String>> = (0..50)
        .map(|_| random_query(&mut rng, 30, 12))
        .collect();
    let index = Bm25Index::build(&streams(&docs), Bm25Params::default());
    for _ in 0..20 {
        let q = random_query(&mut rng, 30, 5);
        let all = bm25_reference(&docs, &q, 1.5, 0.75);
        let want = bm25_reference_top_k(&docs, &q, 1.5, 0.75, 10);
        rankings_agree(&engine_top_k(&index, &q, 10), &want, &all, 1e-9).unwrap();
    }
}

#[test]
fn repeated_query_terms_count_once() {
    let docs = vec![words(&["a", "b"]), words(&["a"]), words(&["c"])];
    let index = Bm25Index::build(&streams(&docs), Bm25Params::default());
    let once = index.score(&TokenStream::from_tokens(["a"]), 0).unwrap();
    let thrice = index.score(&TokenStream::from_tokens(["a", "a", "a"]), 0).unwrap();
    assert_eq!(once, thrice);
}

#[test]
fn more_occurrences_never_lower_the_score() {
    let base = vec![words(&["x", "y", "z"]), words(&["y", "z"]), words(&["z"])];
    let q = TokenStream::from_tokens(["x"]);
    let before = Bm25Index::build(&streams(&base), Bm25Params::default()).score(&q, 0).unwrap();
    // Same length, one more "x".
    let mut more = base.clone();
    more[0] = words(&["x", "x", "z"]);
    let after = Bm25Index::build(&streams(&more), Bm25Params::default()).score(&q, 0).unwrap();
    assert!(after > before);
}

#[test]
fn adding_a_document_is_a_full_rebuild() {
    let mut docs = vec![words(&["p", "q"]), words(&["q", "r", "r"])];
    docs.push(words(&["p", "p", "s"]));
    let index = Bm25Index::build(&streams(&docs), Bm25Params::default());
    for q in [words(&["p"]), words(&["q", "r"]), words(&["s", "p"])] {
        let want = bm25_reference(&docs, &q, 1.5, 0.75);
        for (d, w) in want.iter().enumerate() {
            let got = index.score(&TokenStream::from_tokens(q.clone()), d).unwrap();
            assert!((got - w).abs() < 1e-12, "doc {d}: {got} vs {w}");
        }
    }
}

#[test]
fn out_of_range_doc_is_an_error() {
    let docs = vec![words(&["a"])];
    let index = Bm25Index::build(&streams(&docs), Bm25Params::default());
    assert!(index.score(&TokenStream::from_tokens(["a"]), 1).is_err());
}

#[test]
fn serialized_index_answers_identically() {
    let mut rng = common::rng(17);
    let docs = random_corpus(&mut rng, 40, 20, 10);
    let index = Bm25Index::build(&streams(&docs), Bm25Params::new(1.2, 0.5).unwrap());
    let back = Bm25Index::from_json(&index.to_json()).unwrap();
    assert_eq!(back.to_json(), index.to_json());
    for _ in 0..10 {
        let q = random_query(&mut rng, 20, 4);
        assert_eq!(engine_top_k(&back, &q, 10), engine_top_k(&index, &q, 10));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_corpora_match_reference(
        seed in any::<u64>(),
        k1 in 0.5f64..2.0,
        b in 0.0f64..=1.0,
        k in 1usize..15,
    ) {
        let mut rng = common::rng(seed);
        let docs = random_corpus(&mut rng, 100, 50, 15);
        let index = Bm25Index::build(&streams(&docs), Bm25Params::new(k1, b).unwrap());
        let q = random_query(&mut rng, 50, 6);
        let all = bm25_reference(&docs, &q, k1, b);
        let want = bm25_reference_top_k(&docs, &q, k1, b, k);
        let got = engine_top_k(&index, &q, k);
        prop_assert!(rankings_agree(&got, &want, &all, 1e-9).is_ok(), "{:?}", rankings_agree(&got, &want, &all, 1e-9));
    }

    #[test]
    fn shorter_cutoff_is_a_prefix(seed in any::<u64>(), k in 1usize..10) {
        let mut rng = common::rng(seed);
        let docs = random_corpus(&mut rng, 60, 25, 12);
        let index = Bm25Index::build(&streams(&docs), Bm25Params::default());
        let q = random_query(&mut rng, 25, 5);
        let long = engine_top_k(&index, &q, k + 5);
        let short = engine_top_k(&index, &q, k);
        prop_assert_eq!(&long[..short.len()], &short[..]);
        prop_assert!(short.iter().all(|h| h.1 > 0.0));
    }
}
