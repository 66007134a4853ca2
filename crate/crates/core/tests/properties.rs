use std::collections::BTreeSet;

use proptest::prelude::*;

use kbtext::corpus::{filter_top_similarity, mix_equal, Dataset, PairExample};
use kbtext::encoder::{cosine, Embedding, Encoder, EncoderParams};
use kbtext::metric::pearson;
use kbtext::rdf::{parse_linearized, RdfGraph, Triple};
use kbtext::retrieval::{top_k, EmbeddingIndex};

fn label() -> impl Strategy<Value = String> {
    "[a-zA-Z0-9 _().,'\\[\\]-]{1,10}".prop_filter("must be a valid label", |s| {
        Triple::new(s.as_str(), "p", "o").is_ok()
    })
}

fn graph() -> impl Strategy<Value = RdfGraph> {
    prop::collection::vec((label(), label(), label()), 1..6).prop_map(|ts| {
        RdfGraph::new(
            ts.into_iter()
                .map(|(s, p, o)| Triple::new(s, p, o).unwrap())
                .collect(),
        )
        .unwrap()
    })
}

fn dataset(name: &str, n: usize) -> Dataset {
    let pairs = (0..n)
        .map(|i| {
            let g = RdfGraph::single(Triple::new(format!("e{i}"), "p", format!("f{i}")).unwrap());
            PairExample::new(format!("{name}-{i:03}"), g, format!("text {i}")).unwrap()
        })
        .collect();
    Dataset::new(name, pairs).unwrap()
}

fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn linearize_parse_round_trip(g in graph()) {
        prop_assert_eq!(parse_linearized(&g.linearize()).unwrap(), g);
    }
}

proptest! {
    #[test]
    fn filter_is_monotone_in_fraction(
        scores in prop::collection::vec(0.0f64..1.0, 1..40),
        a in 0.01f64..1.0,
        b in 0.01f64..1.0,
    ) {
        let d = dataset("d", scores.len());
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let by_id = |p: &PairExample| {
            let i: usize = p.id[2..].parse().unwrap();
            Ok(scores[i])
        };
        let small = filter_top_similarity(&d, by_id, lo).unwrap();
        let large = filter_top_similarity(&d, by_id, hi).unwrap();
        let small_ids: BTreeSet<_> = small.pairs().iter().map(|p| p.id.clone()).collect();
        let large_ids: BTreeSet<_> = large.pairs().iter().map(|p| p.id.clone()).collect();
        prop_assert!(small_ids.is_subset(&large_ids));
        // every kept score is at least every dropped score
        let kept_min = small.pairs().iter().map(|p| by_id(p).unwrap()).fold(f64::INFINITY, f64::min);
        for p in d.pairs().iter().filter(|p| !small_ids.contains(&p.id)) {
            prop_assert!(by_id(p).unwrap() <= kept_min);
        }
    }

    #[test]
    fn mix_takes_k_times_smallest(sizes in prop::collection::vec(1usize..30, 2..5), seed in any::<u64>()) {
        let sets: Vec<Dataset> = sizes.iter().enumerate().map(|(k, &n)| dataset(&format!("s{k}"), n)).collect();
        let mixed = mix_equal(&sets, seed).unwrap();
        let smallest = *sizes.iter().min().unwrap();
        prop_assert_eq!(mixed.len(), sizes.len() * smallest);
        let again = mix_equal(&sets, seed).unwrap();
        prop_assert_eq!(again.pairs(), mixed.pairs());
    }

    #[test]
    fn cosine_is_symmetric_and_bounded((a, b) in (1usize..16).prop_flat_map(|d| (vector(d), vector(d)))) {
        let (x, y) = (Embedding(a), Embedding(b));
        if let (Ok(xy), Ok(yx)) = (cosine(&x, &y), cosine(&y, &x)) {
            prop_assert_eq!(xy, yx);
            prop_assert!((-1.0..=1.0).contains(&xy));
        }
    }

    #[test]
    fn embeddings_ignore_token_order(ids in prop::collection::vec(1u32..20, 1..12), seed in any::<u64>()) {
        let params = EncoderParams::init(20, 8, 0, seed).unwrap();
        let mut reversed = ids.clone();
        reversed.reverse();
        prop_assert_eq!(params.embed(&ids).unwrap(), params.embed(&reversed).unwrap());
    }

    #[test]
    fn pearson_is_affine_invariant(
        pairs in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 3..40),
        scale in 0.1f64..10.0,
        shift in -100.0f64..100.0,
    ) {
        let (xs, ys): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        if let Ok(r) = pearson(&xs, &ys) {
            let moved: Vec<f64> = xs.iter().map(|x| scale * x + shift).collect();
            prop_assert!((pearson(&moved, &ys).unwrap() - r).abs() < 1e-9);
            let flipped: Vec<f64> = xs.iter().map(|x| -scale * x + shift).collect();
            prop_assert!((pearson(&flipped, &ys).unwrap() + r).abs() < 1e-9);
        }
    }

    #[test]
    fn top_k_matches_brute_force(
        (items, query) in (2usize..8).prop_flat_map(|d| (prop::collection::vec(vector(d), 1..60), vector(d))),
        k in 1usize..10,
    ) {
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm(&query) > 1e-6 && items.iter().all(|v| norm(v) > 1e-6));
        let index = EmbeddingIndex::from_embeddings(
            items.iter().enumerate().map(|(i, v)| (format!("{i:03}"), Embedding(v.clone()))).collect(),
        ).unwrap();
        let k = k.min(items.len());
        let got = top_k(&index, &Embedding(query.clone()), k).unwrap();
        let mut want: Vec<(String, f64)> = items
            .iter()
            .enumerate()
            .map(|(i, v)| {
                let d: f64 = v.iter().zip(&query).map(|(a, b)| a * b).sum();
                (format!("{i:03}"), d / (norm(v) * norm(&query)))
            })
            .collect();
        want.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        want.truncate(k);
        prop_assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(&want) {
            prop_assert_eq!(&g.0, &w.0);
            prop_assert!((g.1 - w.1).abs() < 1e-12);
        }
    }
}
