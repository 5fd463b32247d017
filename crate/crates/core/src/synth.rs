//! Synthetic datasets with controlled accuracy and error correlation.
//!
//! Disease names are made-up syllable stems. Every generated string is
//! either an exact terminology name or a deliberate misspelling of one.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ids::{CaseId, DiagnosticianId, PromptId};
use crate::ingestion::{CaseVignette, DatasetPaths, Diagnostician, Tenure};
use crate::sampling::{derive_seed, rng_from};
use crate::terminology::{
    embed_queries, normalize, Concept, ConceptId, EmbeddingTable, HashingEmbedder, NormalizationRules, SemanticTag,
    Terminology, TerminologyError,
};

/// How often each diagnostician ranks the correct concept, and how errors
/// relate across diagnosticians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Profile {
    /// Rank 1 with probability `accuracy`, ranks 2..5 with probability
    /// `accuracy * (1 - accuracy)`, otherwise not listed.
    Independent { accuracy: f64 },
    /// As `Independent`, but with probability `rho` a response reuses the
    /// case's shared draw, and wrong answers come from a per-case pool.
    Correlated { accuracy: f64, rho: f64 },
    /// Humans are right on the first `human_share` of cases, LLMs on the
    /// last `llm_share`; nobody lists the correct concept elsewhere.
    Complementary { human_share: f64, llm_share: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub cases: usize,
    pub humans: usize,
    /// Human solvers per case, drawn from the pool.
    pub solvers_per_case: usize,
    pub llms: usize,
    pub prompts: usize,
    /// Extra concepts used only as distractors.
    pub distractors: usize,
    pub profile: Profile,
    /// Probability that a listed name is misspelled.
    pub garble_rate: f64,
    pub embedding_dim: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            cases: 60,
            humans: 12,
            solvers_per_case: 5,
            llms: 3,
            prompts: 2,
            distractors: 80,
            profile: Profile::Independent { accuracy: 0.5 },
            garble_rate: 0.0,
            embedding_dim: 256,
        }
    }
}

const SPECIALTIES: [&str; 4] = ["cardiology", "gastroenterology", "infectious disease", "neurology"];
const ONSETS: [&str; 12] = ["b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "t", "v"];
const VOWELS: [&str; 5] = ["a", "e", "i", "o", "u"];
const CODAS: [&str; 6] = ["", "n", "r", "l", "m", "x"];
const HEADS: [&str; 5] = ["disease", "syndrome", "fever", "infection", "disorder"];
const INTROS: [&str; 4] = [
    "Here are the most likely diagnoses:",
    "Based on the presentation, the differential is:",
    "Sure, here is my ranked list:",
    "",
];

/// A generated dataset, ready to be written out.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub terminology: Terminology,
    pub cases: Vec<CaseVignette>,
    pub diagnosticians: Vec<Diagnostician>,
    pub responses: Vec<SyntheticResponse>,
    pub config: SynthConfig,
}

/// A response record; LLM records carry one raw transcript.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SyntheticResponse {
    pub case_id: CaseId,
    pub diagnostician_id: DiagnosticianId,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prompt_id: Option<PromptId>,
    pub entries: Vec<String>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub raw: bool,
}

/// Where [`SyntheticData::write`] put things.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFiles {
    pub terminology: PathBuf,
    pub embeddings: PathBuf,
    pub dataset: DatasetPaths,
}

fn stem(rng: &mut ChaCha8Rng) -> String {
    let syllables = rng.gen_range(2..=3);
    let mut s = String::new();
    for _ in 0..syllables {
        s.push_str(ONSETS.choose(rng).unwrap());
        s.push_str(VOWELS.choose(rng).unwrap());
        s.push_str(CODAS.choose(rng).unwrap());
    }
    let mut chars = s.chars();
    let first = chars.next().unwrap().to_uppercase().collect::<String>();
    first + chars.as_str()
}

fn garble(name: &str, rng: &mut ChaCha8Rng) -> String {
    let mut chars: Vec<char> = name.chars().collect();
    // stem only; the head word is left intact
    let stem_len = chars.iter().position(|c| *c == ' ').unwrap_or(chars.len());
    if stem_len >= 4 {
        let i = rng.gen_range(1..stem_len - 1);
        chars.swap(i, i + 1);
    }
    chars.into_iter().collect()
}

fn build_terminology(n: usize, rng: &mut ChaCha8Rng) -> Terminology {
    let rules = NormalizationRules::default();
    let mut keys = BTreeSet::new();
    let mut concepts = Vec::with_capacity(n);
    let mut next_id = 100_000u64;
    while concepts.len() < n {
        let s = stem(rng);
        let head = HEADS[concepts.len() % HEADS.len()];
        let alt = HEADS[(concepts.len() + 1) % HEADS.len()];
        let name = format!("{s} {head}");
        let synonym = format!("{s} {alt}");
        let (Ok(a), Ok(b)) = (normalize(&name, &rules), normalize(&synonym, &rules)) else { continue };
        if keys.contains(&a.key()) || keys.contains(&b.key()) || a.key() == b.key() {
            continue;
        }
        keys.insert(a.key());
        keys.insert(b.key());
        let tag = if concepts.len() % 7 == 3 { "finding" } else { "disorder" };
        next_id += rng.gen_range(1..50);
        concepts.push(Concept::new(ConceptId(next_id), format!("{name} ({tag})")).with_synonym(&synonym));
    }
    Terminology::from_concepts(concepts).expect("generated IDs are unique")
}

/// Rank of the correct concept for one response, `None` when unlisted.
fn draw_rank(accuracy: f64, u: f64, rng: &mut ChaCha8Rng) -> Option<usize> {
    if u < accuracy {
        Some(1)
    } else if u < accuracy + accuracy * (1.0 - accuracy) {
        Some(rng.gen_range(2..=5))
    } else {
        None
    }
}

impl SyntheticData {
    pub fn generate(config: &SynthConfig) -> SyntheticData {
        let c = config;
        let mut rng = rng_from(derive_seed(c.seed, &["synth"]));
        let terminology = build_terminology(c.cases.max(1) + c.distractors.max(5), &mut rng);
        let pool: Vec<&Concept> = terminology.concepts().collect();

        let mut order: Vec<usize> = (0..pool.len()).collect();
        order.shuffle(&mut rng);
        let correct: Vec<&Concept> = order[..c.cases].iter().map(|&i| pool[i]).collect();
        let wrong: Vec<&Concept> = order[c.cases..].iter().map(|&i| pool[i]).collect();

        let cases: Vec<CaseVignette> = correct
            .iter()
            .enumerate()
            .map(|(i, concept)| CaseVignette {
                case_id: format!("case{i:04}").into(),
                vignette_text: format!("Synthetic vignette {i}."),
                correct_concepts: [concept.concept_id].into(),
                attributes: [("specialty".to_string(), SPECIALTIES[i % SPECIALTIES.len()].to_string())].into(),
            })
            .collect();

        let tenures = [Tenure::Attending, Tenure::Fellow, Tenure::Resident, Tenure::Student];
        let mut diagnosticians: Vec<Diagnostician> =
            (0..c.humans).map(|h| Diagnostician::human(&format!("human{h:03}"), tenures[h % tenures.len()])).collect();
        diagnosticians
            .extend((0..c.llms).map(|m| Diagnostician::llm(&format!("llm{}", m + 1), &format!("model-{}", m + 1))));

        let mut responses = Vec::new();
        let name_of = |concept: &Concept, rng: &mut ChaCha8Rng| -> String {
            let names: Vec<&str> = concept.names().collect();
            let mut text = crate::terminology::split_tag_suffix(names[rng.gen_range(0..names.len())]).0.to_string();
            if rng.gen_bool(0.3) {
                text = text.to_lowercase();
            }
            if c.garble_rate > 0.0 && rng.gen_bool(c.garble_rate.min(1.0)) {
                text = garble(&text, rng);
            }
            text
        };

        for (i, case) in cases.iter().enumerate() {
            let target = correct[i];
            // the per-case pool of plausible wrong answers
            let case_pool: Vec<&Concept> = wrong.choose_multiple(&mut rng, 6.min(wrong.len())).copied().collect();
            let shared_u: f64 = rng.gen();
            let position = (i as f64 + 0.5) / c.cases as f64;

            let listing = |competence: Option<usize>, rng: &mut ChaCha8Rng| -> Vec<String> {
                let distractors: Vec<&Concept> = match c.profile {
                    Profile::Correlated { .. } => {
                        let mut d = case_pool.clone();
                        d.shuffle(rng);
                        d
                    }
                    _ => wrong.choose_multiple(rng, 5.min(wrong.len())).copied().collect(),
                };
                let mut out: Vec<String> = distractors.iter().take(5).map(|d| name_of(d, rng)).collect();
                if let Some(r) = competence {
                    out.truncate(4);
                    out.insert(r - 1, name_of(target, rng));
                }
                out
            };

            let rank_for = |is_llm: bool, prompt: usize, rng: &mut ChaCha8Rng| -> Option<usize> {
                match c.profile {
                    Profile::Independent { accuracy } => {
                        let p = accuracy.powf(1.0 + 0.25 * prompt as f64);
                        let u = rng.gen();
                        draw_rank(p, u, rng)
                    }
                    Profile::Correlated { accuracy, rho } => {
                        let p = accuracy.powf(1.0 + 0.25 * prompt as f64);
                        let u = if rng.gen_bool(rho.clamp(0.0, 1.0)) { shared_u } else { rng.gen() };
                        draw_rank(p, u, rng)
                    }
                    Profile::Complementary { human_share, llm_share } => {
                        let competent = if is_llm { position >= 1.0 - llm_share } else { position < human_share };
                        competent.then_some(1)
                    }
                }
            };

            let mut humans: Vec<&Diagnostician> = diagnosticians.iter().filter(|d| !d.is_llm()).collect();
            humans.shuffle(&mut rng);
            humans.truncate(c.solvers_per_case);
            humans.sort_by(|a, b| a.diagnostician_id.cmp(&b.diagnostician_id));
            for h in humans {
                let r = rank_for(false, 0, &mut rng);
                let entries = listing(r, &mut rng);
                responses.push(SyntheticResponse {
                    case_id: case.case_id.clone(),
                    diagnostician_id: h.diagnostician_id.clone(),
                    prompt_id: None,
                    entries,
                    raw: false,
                });
            }
            for llm in diagnosticians.iter().filter(|d| d.is_llm()) {
                for p in 0..c.prompts.max(1) {
                    let r = rank_for(true, p, &mut rng);
                    let entries = listing(r, &mut rng);
                    let intro = INTROS[rng.gen_range(0..INTROS.len())];
                    let mut transcript = String::new();
                    if !intro.is_empty() {
                        transcript.push_str(intro);
                        transcript.push('\n');
                    }
                    for (k, e) in entries.iter().enumerate() {
                        transcript.push_str(&format!("{}. {e}\n", k + 1));
                    }
                    responses.push(SyntheticResponse {
                        case_id: case.case_id.clone(),
                        diagnostician_id: llm.diagnostician_id.clone(),
                        prompt_id: Some(format!("prompt{}", p + 1).into()),
                        entries: vec![transcript],
                        raw: true,
                    });
                }
            }
        }

        SyntheticData { terminology, cases, diagnosticians, responses, config: config.clone() }
    }

    /// Every distinct diagnosis string a response may contain after cleanup.
    pub fn query_strings(&self) -> BTreeSet<String> {
        let rules = crate::ingestion::PostprocessRules::default();
        let mut out = BTreeSet::new();
        for r in &self.responses {
            if r.raw {
                if let Ok(entries) = crate::ingestion::postprocess_llm_response(&r.entries[0], &rules) {
                    out.extend(entries);
                }
            } else {
                out.extend(r.entries.iter().map(|e| e.trim().to_string()));
            }
        }
        out
    }

    /// Concept rows plus one query row per response string.
    pub fn embeddings(&self) -> Result<(EmbeddingTable, crate::terminology::PrecomputedEmbedder), TerminologyError> {
        let embedder = HashingEmbedder { dimension: self.config.embedding_dim };
        let table = EmbeddingTable::from_terminology(&self.terminology, &embedder, embedder.dimension)?;
        let queries = self.query_strings();
        let queries = embed_queries(&embedder, embedder.dimension, queries.iter().map(String::as_str))?;
        Ok((table, queries))
    }

    /// Writes terminology, embeddings and the three dataset files into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<SyntheticFiles> {
        fs::create_dir_all(dir)?;
        let files = SyntheticFiles {
            terminology: dir.join("terminology.tsv"),
            embeddings: dir.join("embeddings.tsv"),
            dataset: DatasetPaths::in_dir(dir),
        };
        let mut out = BufWriter::new(File::create(&files.terminology)?);
        self.terminology.write_tsv(&mut out)?;
        out.flush()?;

        let (table, queries) = self.embeddings().map_err(std::io::Error::other)?;
        let mut out = BufWriter::new(File::create(&files.embeddings)?);
        table.write(&mut out)?;
        let mut rows = Vec::new();
        queries.write(&mut rows)?;
        // drop the second header; both blocks share one file
        let text = String::from_utf8(rows).expect("utf-8");
        for line in text.lines().skip(1) {
            writeln!(out, "{line}")?;
        }
        out.flush()?;

        write_jsonl(&files.dataset.cases, &self.cases)?;
        write_jsonl(&files.dataset.diagnosticians, &self.diagnosticians)?;
        write_jsonl(&files.dataset.responses, &self.responses)?;
        Ok(files)
    }

    /// Correct concept of each case.
    pub fn answers(&self) -> BTreeMap<CaseId, ConceptId> {
        self.cases.iter().map(|c| (c.case_id.clone(), *c.correct_concepts.iter().next().unwrap())).collect()
    }
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, item)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

/// Semantic tags present in the generated terminology.
pub fn tags_used(data: &SyntheticData) -> BTreeSet<String> {
    data.terminology
        .concepts()
        .map(|c| match &c.semantic_tag {
            SemanticTag::Other(s) => s.clone(),
            t => t.as_str().to_string(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::{Dataset, PostprocessRules, ResolvedDataset};
    use crate::metrics::{rank_of_correct, RankOutcome};
    use crate::terminology::{Matcher, TerminologyIndex};

    fn resolved(config: &SynthConfig) -> (SyntheticData, ResolvedDataset) {
        let data = SyntheticData::generate(config);
        let dir = tempfile::tempdir().unwrap();
        let files = data.write(dir.path()).unwrap();
        let (ds, summary) = Dataset::load(&files.dataset, &PostprocessRules::default()).unwrap();
        assert_eq!(summary.cases, config.cases);
        let t = Terminology::load(&files.terminology).unwrap();
        ds.check_concepts(&t).unwrap();
        let (table, queries) = EmbeddingTable::load(&files.embeddings).unwrap();
        let m = Matcher::with_embeddings(
            TerminologyIndex::build(&t, NormalizationRules::default()),
            table,
            Box::new(queries),
        );
        let (r, log) = ResolvedDataset::resolve(&ds, &m);
        assert!(log.rejected.is_empty(), "{:?}", log.rejected);
        (data, r)
    }

    fn outcomes(r: &ResolvedDataset) -> Vec<RankOutcome> {
        r.cases
            .values()
            .flat_map(|c| c.humans.values().chain(c.llms.values()).map(|l| rank_of_correct(l, &c.correct)))
            .collect()
    }

    #[test]
    fn perfect_accuracy_is_always_first() {
        let cfg = SynthConfig { cases: 12, profile: Profile::Independent { accuracy: 1.0 }, ..SynthConfig::default() };
        let (_, r) = resolved(&cfg);
        let all = outcomes(&r);
        assert_eq!(all.len(), 12 * (5 + 3 * 2));
        assert!(all.iter().all(|o| o.rank() == Some(1)));
    }

    #[test]
    fn zero_accuracy_never_ranks() {
        let cfg = SynthConfig { cases: 12, profile: Profile::Independent { accuracy: 0.0 }, ..SynthConfig::default() };
        let (_, r) = resolved(&cfg);
        assert!(outcomes(&r).iter().all(|o| o.category().is_none()));
    }

    #[test]
    fn garbled_names_still_resolve() {
        let cfg = SynthConfig {
            cases: 20,
            garble_rate: 0.3,
            profile: Profile::Independent { accuracy: 1.0 },
            ..SynthConfig::default()
        };
        let (_, r) = resolved(&cfg);
        let hits = outcomes(&r).iter().filter(|o| o.rank() == Some(1)).count();
        let total = outcomes(&r).len();
        assert!(hits as f64 / total as f64 > 0.9, "{hits}/{total}");
    }

    #[test]
    fn complementary_pools_split_competence() {
        let cfg = SynthConfig {
            cases: 50,
            profile: Profile::Complementary { human_share: 0.6, llm_share: 0.6 },
            ..SynthConfig::default()
        };
        let (_, r) = resolved(&cfg);
        let mut human_hits = 0;
        let mut llm_hits = 0;
        for c in r.cases.values() {
            human_hits +=
                usize::from(c.humans.values().next().is_some_and(|l| rank_of_correct(l, &c.correct).rank() == Some(1)));
            llm_hits +=
                usize::from(c.llms.values().next().is_some_and(|l| rank_of_correct(l, &c.correct).rank() == Some(1)));
        }
        assert_eq!(human_hits, 30);
        assert_eq!(llm_hits, 30);
    }

    #[test]
    fn deterministic_output() {
        let cfg = SynthConfig { cases: 10, garble_rate: 0.2, ..SynthConfig::default() };
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        SyntheticData::generate(&cfg).write(a.path()).unwrap();
        SyntheticData::generate(&cfg).write(b.path()).unwrap();
        for f in ["terminology.tsv", "embeddings.tsv", "cases.jsonl", "diagnosticians.jsonl", "responses.jsonl"] {
            assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        assert!(tags_used(&SyntheticData::generate(&cfg)).contains("finding"));
    }
}
