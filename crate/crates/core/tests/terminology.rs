mod common;

use collective_dx::terminology::{
    cosine, embed_queries, Concept, ConceptId, EmbeddingTable, EntryKey, HashingEmbedder, MatchMethod, Matcher,
    NormalizationRules, SemanticTag, Terminology, TerminologyIndex, TextEmbedder,
};
use common::matching_terminology;
use proptest::prelude::*;

fn hashing_matcher(t: &Terminology) -> Matcher {
    let embedder = HashingEmbedder { dimension: 256 };
    let table = EmbeddingTable::from_terminology(t, &embedder, 256).unwrap();
    Matcher::with_embeddings(TerminologyIndex::build(t, NormalizationRules::default()), table, Box::new(embedder))
}

#[test]
fn chlamydia_synonym_resolves_exactly() {
    let m = hashing_matcher(&matching_terminology(true));
    let r = m.resolve("Chlamydia infection").unwrap();
    assert_eq!(r.concept_id, ConceptId(240589008));
    assert_eq!(r.method, MatchMethod::Exact);
}

#[test]
fn hiv_disease_falls_back_to_embedding() {
    let m = hashing_matcher(&matching_terminology(true));
    assert!(m.match_exact("Human immunodeficiency virus disease").is_none());
    let r = m.resolve("Human immunodeficiency virus disease").unwrap();
    assert_eq!(r.concept_id, ConceptId(86406008));
    assert_eq!(r.method, MatchMethod::Embedding);
}

#[test]
fn every_stored_name_matches_exactly() {
    let t = matching_terminology(true);
    let m = hashing_matcher(&t);
    let names: Vec<String> = t.concepts().flat_map(|c| c.names().map(str::to_string)).collect();
    assert_eq!(names.len(), t.entry_count());
    for name in &names {
        let r = m.resolve(name).unwrap();
        assert_eq!(r.method, MatchMethod::Exact, "{name}");
    }
    let a = m.agreement(names.iter().map(String::as_str)).unwrap();
    assert_eq!(a.compared, names.len());
    assert_eq!(a.rate(), Some(1.0));
}

#[test]
fn off_vocabulary_strings_use_embeddings_only() {
    let m = hashing_matcher(&matching_terminology(true));
    for text in ["Pneumonai", "Sinusitus acute", "Diabetis"] {
        assert!(m.match_exact(text).is_none());
        assert_eq!(m.resolve(text).unwrap().method, MatchMethod::Embedding);
    }
}

#[test]
fn disorder_beats_finding_on_identical_tokens() {
    for order in [[1u64, 2], [2, 1]] {
        let concepts = order.map(|i| match i {
            1 => Concept::new(ConceptId(900), "Fever (finding)"),
            _ => Concept::new(ConceptId(901), "Fever (disorder)"),
        });
        let t = Terminology::from_concepts(concepts).unwrap();
        let index = TerminologyIndex::build(&t, NormalizationRules::default());
        assert_eq!(index.match_exact("fever"), Some(ConceptId(901)));
        assert_eq!(t.get(ConceptId(901)).unwrap().semantic_tag, SemanticTag::Disorder);
    }
}

#[test]
fn equal_tags_prefer_the_smaller_id() {
    let t = Terminology::from_concepts([
        Concept::new(ConceptId(77), "Cough (finding)"),
        Concept::new(ConceptId(12), "Coughs (finding)"),
    ])
    .unwrap();
    let index = TerminologyIndex::build(&t, NormalizationRules::default());
    assert_eq!(index.match_exact("cough"), Some(ConceptId(12)));
}

#[test]
fn embedding_file_round_trip_with_queries() {
    let t = matching_terminology(true);
    let embedder = HashingEmbedder { dimension: 32 };
    let table = EmbeddingTable::from_terminology(&t, &embedder, 32).unwrap();
    assert_eq!(table.len(), t.entry_count());
    let queries = embed_queries(&embedder, 32, ["Human immunodeficiency virus disease", "Heart attack"]).unwrap();

    let mut bytes = Vec::new();
    table.write(&mut bytes).unwrap();
    let mut query_bytes = Vec::new();
    queries.write(&mut query_bytes).unwrap();
    let text = String::from_utf8(bytes).unwrap();
    assert!(text.starts_with("dim=32\n"));
    let query_text = String::from_utf8(query_bytes).unwrap();
    let (header, query_rows) = query_text.split_once('\n').unwrap();
    assert_eq!(header, "dim=32");
    let joined = text + query_rows;

    let (back, back_queries) = EmbeddingTable::read(joined.as_bytes(), "joined").unwrap();
    assert_eq!(back.rows().len(), table.rows().len());
    for (a, b) in back.rows().iter().zip(table.rows()) {
        assert_eq!(a.key, b.key);
        assert_eq!(a.vector, b.vector);
    }
    assert_eq!(back_queries.len(), 2);
    // a stored name is its own nearest row
    let probe = back_queries.embed("Heart attack").unwrap();
    let (id, sim) = back.nearest(&probe).unwrap();
    assert_eq!(id, ConceptId(22298006));
    assert!(sim > 0.999999, "{sim}");
}

#[test]
fn malformed_embedding_files_are_rejected() {
    for bad in [
        "",
        "dims=2\n1:0\t1 0\n",
        "dim=2\n1:0\t1 0 0\n",
        "dim=2\n1:0\t1 x\n",
        "dim=2\n1:0\t0 0\n",
        "dim=2\n1:0\t1 0\n1:0\t0 1\n",
    ] {
        assert!(EmbeddingTable::read(bad.as_bytes(), "bad").is_err(), "{bad:?}");
    }
}

#[test]
fn query_rows_and_entry_rows_are_told_apart() {
    let (table, queries) = EmbeddingTable::read("dim=2\n5:0\t1 0\n5:1\t0 1\nfever 3\t1 1\n".as_bytes(), "t").unwrap();
    assert_eq!(table.len(), 2);
    assert_eq!(table.rows()[1].key, EntryKey { concept_id: ConceptId(5), index: 1 });
    assert_eq!(queries.embed("fever 3").unwrap(), vec![1.0, 1.0]);
}

fn vectors(dim: usize, n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), n)
}

proptest! {
    #[test]
    fn nearest_matches_brute_force(rows in vectors(6, 1..30), query in prop::collection::vec(-1.0f64..1.0, 6)) {
        prop_assume!(query.iter().any(|x| x.abs() > 1e-3));
        let rows: Vec<Vec<f64>> = rows.into_iter().filter(|r| r.iter().any(|x| x.abs() > 1e-3)).collect();
        prop_assume!(!rows.is_empty());
        let mut table = EmbeddingTable::new(6);
        for (i, r) in rows.iter().enumerate() {
            // two rows per concept
            table.insert(EntryKey { concept_id: ConceptId((i / 2) as u64 + 10), index: i % 2 }, r.clone()).unwrap();
        }
        let (id, sim) = table.nearest(&query).unwrap();

        let mut best: Option<(f64, u64)> = None;
        for (i, r) in rows.iter().enumerate() {
            let dot: f64 = r.iter().zip(&query).map(|(a, b)| a * b).sum();
            let s = dot / (r.iter().map(|x| x * x).sum::<f64>().sqrt() * query.iter().map(|x| x * x).sum::<f64>().sqrt());
            let c = (i / 2) as u64 + 10;
            best = match best {
                Some((bs, bc)) if bs > s + 1e-12 || ((bs - s).abs() <= 1e-12 && bc <= c) => Some((bs, bc)),
                _ => Some((s, c)),
            };
        }
        let (bs, _) = best.unwrap();
        prop_assert!((sim - bs).abs() < 1e-9);
        let chosen: f64 = rows.iter().enumerate().filter(|(i, _)| (i / 2) as u64 + 10 == id.0)
            .map(|(_, r)| cosine(r, &query).unwrap()).fold(f64::MIN, f64::max);
        prop_assert!((chosen - bs).abs() < 1e-9);
    }

    #[test]
    fn cosine_is_scale_invariant(a in prop::collection::vec(-1.0f64..1.0, 4), b in prop::collection::vec(-1.0f64..1.0, 4), k in 0.1f64..10.0) {
        prop_assume!(a.iter().any(|x| x.abs() > 1e-3) && b.iter().any(|x| x.abs() > 1e-3));
        let scaled: Vec<f64> = a.iter().map(|x| x * k).collect();
        let (c1, c2) = (cosine(&a, &b).unwrap(), cosine(&scaled, &b).unwrap());
        prop_assert!((c1 - c2).abs() < 1e-12);
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&c1));
    }
}
