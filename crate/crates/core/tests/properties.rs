//! Property tests for the invariants of chunking, embedding, retrieval,
//! persistence, memory and ROUGE.

use docloom_core::chain::ConversationMemory;
use docloom_core::embed::{hashed_embed, tokenize, EmbeddingVector, TokenSequence};
use docloom_core::eval::{lcs_length, rouge_l, rouge_n};
use docloom_core::index::cosine_similarity;
use docloom_core::ingest::{chunk_text, ChunkingParams};
use docloom_core::{ChunkMetadata, Role, VectorStore};
use proptest::prelude::*;

fn text_and_params() -> impl Strategy<Value = (String, ChunkingParams)> {
    ("[a-zé✓ \n.]{1,300}", 1usize..60).prop_flat_map(|(text, size)| {
        (Just(text), Just(size), 0..size).prop_map(|(t, s, o)| (t, ChunkingParams::new(s, o).unwrap()))
    })
}

fn word_list() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-z0-9]{1,8}", 1..40)
}

fn seq(words: &[String]) -> TokenSequence {
    tokenize(&words.join(" "))
}

fn vector(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, dim).prop_filter("non-zero", |v| v.iter().any(|c| c.abs() > 1e-6))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn chunking_laws((text, params) in text_and_params()) {
        let chunks = chunk_text("d", &text, &params).unwrap();
        let len = text.chars().count();
        prop_assert_eq!(chunks[0].start_index, 0);
        prop_assert_eq!(chunks.last().unwrap().end_index, len);
        for w in chunks.windows(2) {
            // coverage without gaps, and exact overlap for full chunks
            prop_assert!(w[1].start_index <= w[0].end_index);
            prop_assert_eq!(w[1].start_index, w[0].end_index - params.chunk_overlap);
        }
        let mut rebuilt = chunks[0].text.clone();
        for c in &chunks[1..] {
            rebuilt.extend(c.text.chars().skip(params.chunk_overlap));
        }
        prop_assert_eq!(&rebuilt, &text);
        for c in &chunks {
            let expected: String = text.chars().skip(c.start_index).take(c.end_index - c.start_index).collect();
            prop_assert_eq!(&c.text, &expected);
        }
        prop_assert_eq!(chunk_text("d", &text, &params).unwrap(), chunks);
    }

    #[test]
    fn hashed_vectors_are_unit(words in word_list(), dim in 8usize..512) {
        if let Ok(v) = hashed_embed(&seq(&words), dim) {
            prop_assert!((v.norm() - 1.0).abs() < 1e-9);
            prop_assert_eq!(v.dim(), dim);
        }
    }

    #[test]
    fn hashed_is_permutation_invariant(words in word_list(), seed in any::<u64>()) {
        let mut shuffled = words.clone();
        // deterministic Fisher-Yates from the seed
        let mut s = seed | 1;
        for i in (1..shuffled.len()).rev() {
            s ^= s << 13; s ^= s >> 7; s ^= s << 17;
            shuffled.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let a = hashed_embed(&seq(&words), 384);
        let b = hashed_embed(&seq(&shuffled), 384);
        match (a, b) {
            (Ok(a), Ok(b)) => prop_assert_eq!(a, b),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "one side failed"),
        }
    }

    #[test]
    fn duplicating_tokens_keeps_vector(words in word_list()) {
        let doubled: Vec<String> = words.iter().chain(words.iter()).cloned().collect();
        if let (Ok(a), Ok(b)) = (hashed_embed(&seq(&words), 128), hashed_embed(&seq(&doubled), 128)) {
            for (x, y) in a.components().iter().zip(b.components()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tokenize_is_idempotent(text in "\\PC{0,80}") {
        let once = tokenize(&text);
        prop_assert_eq!(tokenize(&once.join(" ")), once.clone());
        prop_assert!(once.iter().all(|t| !t.is_empty() && t.bytes().all(|b| b.is_ascii_lowercase() || b.is_ascii_digit())));
    }

    #[test]
    fn cosine_symmetric_and_bounded(u in vector(16), v in vector(16)) {
        let u = EmbeddingVector::new(u).unwrap();
        let v = EmbeddingVector::new(v).unwrap();
        let a = cosine_similarity(&u, &v).unwrap();
        let b = cosine_similarity(&v, &u).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
        prop_assert!((-1.0..=1.0).contains(&a));
    }

    #[test]
    fn top_k_matches_full_sort(
        entries in prop::collection::vec(vector(8), 0..200),
        query in vector(8),
        k in 1usize..12,
    ) {
        let mut store = VectorStore::new(8);
        for (i, e) in entries.iter().enumerate() {
            store.add_entry(&format!("c{i}"), ChunkMetadata::default(), "", &EmbeddingVector::new(e.clone()).unwrap()).unwrap();
        }
        let q = EmbeddingVector::new(query.clone()).unwrap();
        let got = store.top_k(&q, k).unwrap();

        let mut oracle: Vec<(f64, usize)> = store.entries().iter().enumerate().map(|(i, e)| {
            let dot: f64 = query.iter().zip(&e.vector).map(|(a, b)| a * f64::from(*b)).sum();
            let nq: f64 = query.iter().map(|a| a * a).sum::<f64>().sqrt();
            let ne: f64 = e.vector.iter().map(|b| f64::from(*b) * f64::from(*b)).sum::<f64>().sqrt();
            (dot / (nq * ne), i)
        }).collect();
        oracle.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
        oracle.truncate(k);
        prop_assert_eq!(got.len(), oracle.len());
        for (r, (s, i)) in got.iter().zip(&oracle) {
            prop_assert!((r.score - s).abs() < 1e-9);
            prop_assert_eq!(r.position, *i);
        }

        let scaled = store.top_k(&q.scaled(3.7), k).unwrap();
        let ids: Vec<_> = got.iter().map(|r| &r.chunk_id).collect();
        let scaled_ids: Vec<_> = scaled.iter().map(|r| &r.chunk_id).collect();
        prop_assert_eq!(ids, scaled_ids);
    }

    #[test]
    fn store_roundtrip(
        entries in prop::collection::vec((vector(8), "\\PC{0,40}", 1u32..5, 1u32..9), 0..30),
    ) {
        let mut store = VectorStore::new(8);
        for (i, (v, text, page, para)) in entries.iter().enumerate() {
            store.add_entry(&format!("doc-c{i}"), ChunkMetadata::new(*page, *para), text, &EmbeddingVector::new(v.clone()).unwrap()).unwrap();
        }
        let bytes = store.to_bytes();
        let back = VectorStore::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &store);
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn memory_alternates(max in 0usize..30, exchanges in 0usize..40) {
        let mut m = ConversationMemory::new(max);
        for i in 0..exchanges {
            m.push_exchange(format!("q{i}"), format!("a{i}"));
        }
        prop_assert!(m.len() <= m.max_turns());
        for (i, t) in m.turns().iter().enumerate() {
            let expected = if i % 2 == 0 { Role::User } else { Role::Assistant };
            prop_assert_eq!(t.role, expected);
        }
        if exchanges > 0 {
            let last = format!("a{}", exchanges - 1);
            prop_assert_eq!(&m.turns().last().unwrap().content, &last);
        }
    }

    #[test]
    fn rouge_swap_and_range(a in "[a-d ]{0,40}", b in "[a-d ]{0,40}", n in 1usize..4) {
        let ab = rouge_n(&a, &b, n);
        let ba = rouge_n(&b, &a, n);
        prop_assert_eq!(ab.recall, ba.precision);
        for s in [ab, rouge_l(&a, &b, 1.2)] {
            for x in [s.recall, s.precision, s.f] {
                prop_assert!((0.0..=1.0).contains(&x));
            }
            if s.recall > 0.0 && s.precision > 0.0 {
                prop_assert!(s.f >= s.recall.min(s.precision) - 1e-12);
                prop_assert!(s.f <= s.recall.max(s.precision) + 1e-12);
            }
        }
    }

    #[test]
    fn rouge_recall_monotone(cand in "[a-d ]{0,30}", reference in "[a-d ]{1,30}", pick in any::<prop::sample::Index>()) {
        let ref_tokens = tokenize(&reference);
        prop_assume!(!ref_tokens.is_empty());
        let extra = &ref_tokens[pick.index(ref_tokens.len())];
        let extended = format!("{cand} {extra}");
        for n in 1..3 {
            prop_assert!(rouge_n(&extended, &reference, n).recall >= rouge_n(&cand, &reference, n).recall);
        }
    }

    #[test]
    fn lcs_symmetric_and_bounded(x in prop::collection::vec("[a-c]", 0..25), y in prop::collection::vec("[a-c]", 0..25)) {
        let l = lcs_length(&x, &y);
        prop_assert_eq!(l, lcs_length(&y, &x));
        prop_assert!(l <= x.len().min(y.len()));
    }

    #[test]
    fn rouge_l_large_beta_tends_to_recall(a in "[a-d ]{1,40}", b in "[a-d ]{1,40}") {
        let s = rouge_l(&a, &b, 1e6);
        prop_assert!((s.f - s.recall).abs() < 1e-5);
    }
}
