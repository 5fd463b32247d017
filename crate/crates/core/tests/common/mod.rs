//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use collective_dx::ingestion::{Diagnostician, ResolvedCase, ResolvedDataset, Tenure};
use collective_dx::terminology::{Concept, ConceptId, Terminology};
use rand::Rng;

/// A differential with the correct concept (id 1) at `rank`, or absent when
/// `rank` is 0 or beyond `len`. Filler concepts are unique per `salt`.
pub fn list_with(rank: usize, len: usize, salt: u64) -> Vec<ConceptId> {
    (1..=len).map(|p| if p == rank { ConceptId(1) } else { ConceptId(1000 * salt + p as u64) }).collect()
}

/// Builder for small resolved datasets with correct concept 1 on every case.
#[derive(Default)]
pub struct Fixture {
    pub data: ResolvedDataset,
}

impl Fixture {
    pub fn llm(mut self, id: &str) -> Self {
        self.data.diagnosticians.insert(id.into(), Diagnostician::llm(id, id));
        self
    }

    pub fn human(mut self, id: &str, tenure: Tenure) -> Self {
        self.data.diagnosticians.insert(id.into(), Diagnostician::human(id, tenure));
        self
    }

    pub fn case(mut self, id: &str) -> Self {
        let case = ResolvedCase { correct: BTreeSet::from([ConceptId(1)]), ..ResolvedCase::default() };
        self.data.cases.insert(id.into(), case);
        self
    }

    pub fn answer(mut self, who: &str, prompt: Option<&str>, case: &str, entries: Vec<ConceptId>) -> Self {
        self.data.insert(who.into(), prompt.map(Into::into), &case.into(), entries);
        self
    }
}

/// Reference scorer: enumerate every (member, rank) pair and add w / rank.
/// Ordering is score descending with a 1e-12 tolerance, then best rank,
/// then concept id.
pub fn brute_force_aggregate(lists: &[(f64, Vec<ConceptId>)]) -> Vec<(ConceptId, f64)> {
    let mut score: BTreeMap<ConceptId, f64> = BTreeMap::new();
    let mut best: BTreeMap<ConceptId, usize> = BTreeMap::new();
    for (w, list) in lists {
        if *w == 0.0 {
            continue;
        }
        for (i, c) in list.iter().enumerate() {
            let r = i + 1;
            *score.entry(*c).or_default() += w / r as f64;
            let b = best.entry(*c).or_insert(r);
            *b = (*b).min(r);
        }
    }
    let mut out: Vec<(ConceptId, f64)> = score.into_iter().collect();
    out.sort_by(|a, b| {
        if (a.1 - b.1).abs() > 1e-12 {
            b.1.partial_cmp(&a.1).unwrap()
        } else {
            best[&a.0].cmp(&best[&b.0]).then(a.0.cmp(&b.0))
        }
    });
    out
}

/// Random instance: up to 10 members with up to 10 distinct entries drawn
/// from a small pool so lists overlap.
pub fn random_instance<R: Rng>(rng: &mut R) -> Vec<(f64, Vec<ConceptId>)> {
    let members = rng.gen_range(1..=10);
    (0..members)
        .map(|_| {
            let len = rng.gen_range(1..=10);
            let mut pool: Vec<u64> = (1..=15).collect();
            let mut list = Vec::with_capacity(len);
            for _ in 0..len {
                let i = rng.gen_range(0..pool.len());
                list.push(ConceptId(pool.swap_remove(i)));
            }
            (rng.gen_range(0.01..5.0), list)
        })
        .collect()
}

/// Concepts used by the matching fixtures.
pub fn matching_terminology(with_chlamydia_synonym: bool) -> Terminology {
    let mut chlamydia = Concept::new(ConceptId(240589008), "Chlamydial infection (disorder)");
    if with_chlamydia_synonym {
        chlamydia = chlamydia.with_synonym("Chlamydia infection");
    }
    Terminology::from_concepts([
        chlamydia,
        Concept::new(ConceptId(86406008), "Human immunodeficiency virus infection (disorder)"),
        Concept::new(ConceptId(6142004), "Influenza (disorder)").with_synonym("Flu"),
        Concept::new(ConceptId(195967001), "Asthma (disorder)"),
        Concept::new(ConceptId(22298006), "Myocardial infarction (disorder)").with_synonym("Heart attack"),
        Concept::new(ConceptId(38341003), "Hypertensive disorder, systemic arterial (disorder)")
            .with_synonym("Hypertension"),
        Concept::new(ConceptId(73211009), "Diabetes mellitus (disorder)"),
        Concept::new(ConceptId(233604007), "Pneumonia (disorder)"),
        Concept::new(ConceptId(68566005), "Urinary tract infectious disease (disorder)")
            .with_synonym("Urinary tract infection"),
        Concept::new(ConceptId(36971009), "Sinusitis (disorder)"),
    ])
    .unwrap()
}

/// Generates a synthetic dataset, writes it to disk and resolves it back
/// through the file loaders and the matcher.
pub fn synthetic(config: &collective_dx::synth::SynthConfig) -> ResolvedDataset {
    use collective_dx::ingestion::{Dataset, PostprocessRules};
    use collective_dx::terminology::{EmbeddingTable, Matcher, NormalizationRules, TerminologyIndex};

    let data = collective_dx::synth::SyntheticData::generate(config);
    let dir = tempfile::tempdir().unwrap();
    let files = data.write(dir.path()).unwrap();
    let (ds, _) = Dataset::load(&files.dataset, &PostprocessRules::default()).unwrap();
    let t = Terminology::load(&files.terminology).unwrap();
    let (table, queries) = EmbeddingTable::load(&files.embeddings).unwrap();
    let m =
        Matcher::with_embeddings(TerminologyIndex::build(&t, NormalizationRules::default()), table, Box::new(queries));
    ResolvedDataset::resolve(&ds, &m).0
}
