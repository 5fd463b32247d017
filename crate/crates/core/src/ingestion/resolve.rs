use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;

use super::dataset::{Dataset, Diagnostician, RankedResponse};
use super::IngestionError;
use crate::ids::{CaseId, DiagnosticianId, PromptId};
use crate::terminology::{ConceptId, MatchMethod, MatchResult, Matcher};

/// How one raw entry of a response was resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryResolution {
    pub raw: String,
    /// 1-based position in the raw list.
    pub source_rank: usize,
    pub result: Result<MatchResult, String>,
}

/// A response after concept resolution: ordered, duplicate-free concept IDs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedDifferential {
    pub case_id: CaseId,
    pub diagnostician_id: DiagnosticianId,
    pub prompt_id: Option<PromptId>,
    pub entries: Vec<ConceptId>,
    /// Source rank of each surviving entry, parallel to `entries`.
    pub source_ranks: Vec<usize>,
    pub audit: Vec<EntryResolution>,
}

impl MatchedDifferential {
    pub fn methods(&self) -> impl Iterator<Item = MatchMethod> + '_ {
        self.audit.iter().filter_map(|a| a.result.as_ref().ok().map(|r| r.method))
    }
}

/// Resolves each entry and collapses repeated concepts onto their best rank.
///
/// Entries that fail to resolve are skipped and kept in the audit trail; a
/// nonempty response where nothing resolves is rejected.
pub fn resolve(response: &RankedResponse, matcher: &Matcher) -> Result<MatchedDifferential, IngestionError> {
    resolve_with(response, |text| matcher.resolve(text).map_err(|e| e.to_string()))
}

fn resolve_with(
    response: &RankedResponse,
    mut lookup: impl FnMut(&str) -> Result<MatchResult, String>,
) -> Result<MatchedDifferential, IngestionError> {
    let mut entries = Vec::new();
    let mut source_ranks = Vec::new();
    let mut audit = Vec::with_capacity(response.entries.len());
    for (i, raw) in response.entries.iter().enumerate() {
        let result = lookup(raw);
        if let Ok(m) = &result {
            if !entries.contains(&m.concept_id) {
                entries.push(m.concept_id);
                source_ranks.push(i + 1);
            }
        }
        audit.push(EntryResolution { raw: raw.clone(), source_rank: i + 1, result });
    }
    if entries.is_empty() && !response.entries.is_empty() {
        let reasons: Vec<String> = audit.iter().filter_map(|a| a.result.clone().err()).collect();
        return Err(IngestionError::Unresolvable { key: response.key().to_string(), reason: reasons.join("; ") });
    }
    Ok(MatchedDifferential {
        case_id: response.case_id.clone(),
        diagnostician_id: response.diagnostician_id.clone(),
        prompt_id: response.prompt_id.clone(),
        entries,
        source_ranks,
        audit,
    })
}

/// Everything the evaluation needs about one case.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResolvedCase {
    pub correct: BTreeSet<ConceptId>,
    pub specialty: Option<String>,
    /// Human solver -> differential.
    pub humans: BTreeMap<DiagnosticianId, Vec<ConceptId>>,
    /// (LLM, prompt) -> differential.
    pub llms: BTreeMap<(DiagnosticianId, Option<PromptId>), Vec<ConceptId>>,
}

impl ResolvedCase {
    pub fn llm(&self, model: &DiagnosticianId, prompt: &Option<PromptId>) -> Option<&[ConceptId]> {
        self.llms.get(&(model.clone(), prompt.clone())).map(Vec::as_slice)
    }

    pub fn solver_count(&self) -> usize {
        self.humans.len()
    }
}

/// A dataset after every response has been mapped onto concept IDs.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResolvedDataset {
    pub cases: BTreeMap<CaseId, ResolvedCase>,
    pub diagnosticians: BTreeMap<DiagnosticianId, Diagnostician>,
}

/// Per distinct string resolution, plus responses that could not be used.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ResolutionLog {
    pub strings: BTreeMap<String, Result<MatchResult, String>>,
    /// Keys of rejected responses; they are kept as empty differentials.
    pub rejected: Vec<String>,
}

impl ResolutionLog {
    pub fn method_counts(&self) -> (usize, usize, usize) {
        let mut exact = 0;
        let mut embedding = 0;
        let mut failed = 0;
        for r in self.strings.values() {
            match r {
                Ok(m) if m.method == MatchMethod::Exact => exact += 1,
                Ok(_) => embedding += 1,
                Err(_) => failed += 1,
            }
        }
        (exact, embedding, failed)
    }
}

impl ResolvedDataset {
    /// Starts an empty resolved dataset for the given cases and diagnosticians.
    pub fn skeleton(dataset: &Dataset) -> Self {
        let cases = dataset
            .cases
            .iter()
            .map(|(id, c)| {
                let rc = ResolvedCase {
                    correct: c.correct_concepts.clone(),
                    specialty: c.specialty().map(str::to_string),
                    ..ResolvedCase::default()
                };
                (id.clone(), rc)
            })
            .collect();
        ResolvedDataset { cases, diagnosticians: dataset.diagnosticians.clone() }
    }

    /// Resolves every response, caching one match per distinct string.
    pub fn resolve(dataset: &Dataset, matcher: &Matcher) -> (ResolvedDataset, ResolutionLog) {
        let mut cache: HashMap<String, Result<MatchResult, String>> = HashMap::new();
        let mut out = ResolvedDataset::skeleton(dataset);
        let mut log = ResolutionLog::default();
        for response in dataset.responses.values() {
            let lookup = |text: &str| {
                cache
                    .entry(text.to_string())
                    .or_insert_with(|| matcher.resolve(text).map_err(|e| e.to_string()))
                    .clone()
            };
            let differential = match resolve_with(response, lookup) {
                Ok(d) => d,
                Err(_) => {
                    log.rejected.push(response.key().to_string());
                    MatchedDifferential {
                        case_id: response.case_id.clone(),
                        diagnostician_id: response.diagnostician_id.clone(),
                        prompt_id: response.prompt_id.clone(),
                        entries: Vec::new(),
                        source_ranks: Vec::new(),
                        audit: Vec::new(),
                    }
                }
            };
            out.insert(
                differential.diagnostician_id,
                differential.prompt_id,
                &differential.case_id,
                differential.entries,
            );
        }
        log.strings = cache.into_iter().collect();
        (out, log)
    }

    /// Adds one differential. Unknown diagnosticians or cases are ignored.
    pub fn insert(
        &mut self,
        diagnostician_id: DiagnosticianId,
        prompt_id: Option<PromptId>,
        case_id: &CaseId,
        entries: Vec<ConceptId>,
    ) {
        let Some(who) = self.diagnosticians.get(&diagnostician_id) else { return };
        let is_llm = who.is_llm();
        let Some(case) = self.cases.get_mut(case_id) else { return };
        if is_llm {
            case.llms.insert((diagnostician_id, prompt_id), entries);
        } else {
            case.humans.insert(diagnostician_id, entries);
        }
    }

    pub fn llm_ids(&self) -> Vec<DiagnosticianId> {
        self.diagnosticians.values().filter(|d| d.is_llm()).map(|d| d.diagnostician_id.clone()).collect()
    }

    /// Prompts seen for `model` across all cases.
    pub fn prompts(&self, model: &DiagnosticianId) -> BTreeSet<Option<PromptId>> {
        self.cases.values().flat_map(|c| c.llms.keys()).filter(|(m, _)| m == model).map(|(_, p)| p.clone()).collect()
    }

    /// Drops cases with fewer than `min` human solvers.
    pub fn with_min_solvers(&self, min: usize) -> ResolvedDataset {
        ResolvedDataset {
            cases: self
                .cases
                .iter()
                .filter(|(_, c)| c.solver_count() >= min)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            diagnosticians: self.diagnosticians.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terminology::{
        Concept, EmbeddingTable, HashingEmbedder, NormalizationRules, Terminology, TerminologyIndex,
    };

    fn matcher() -> Matcher {
        let t = Terminology::from_concepts([
            Concept::new(ConceptId(6142004), "Influenza (disorder)").with_synonym("Flu"),
            Concept::new(ConceptId(195967001), "Asthma (disorder)"),
            Concept::new(ConceptId(235595009), "Gastroesophageal reflux disease (disorder)"),
        ])
        .unwrap();
        let e = HashingEmbedder { dimension: 128 };
        let table = EmbeddingTable::from_terminology(&t, &e, 128).unwrap();
        Matcher::with_embeddings(TerminologyIndex::build(&t, NormalizationRules::default()), table, Box::new(e))
    }

    fn response(entries: &[&str]) -> RankedResponse {
        RankedResponse {
            case_id: "c1".into(),
            diagnostician_id: "h1".into(),
            prompt_id: None,
            entries: entries.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn duplicates_collapse_to_best_rank() {
        let d = resolve(&response(&["flu", "influenza"]), &matcher()).unwrap();
        assert_eq!(d.entries, vec![ConceptId(6142004)]);
        assert_eq!(d.source_ranks, vec![1]);
        assert_eq!(d.audit.len(), 2);
    }

    #[test]
    fn order_preserved() {
        let d = resolve(&response(&["Asthma", "Flu"]), &matcher()).unwrap();
        assert_eq!(d.entries, vec![ConceptId(195967001), ConceptId(6142004)]);
        let d = resolve(&response(&["Flu", "Asthma", "flu", "GERD"]), &matcher()).unwrap();
        assert_eq!(d.entries, vec![ConceptId(6142004), ConceptId(195967001), ConceptId(235595009)]);
        assert_eq!(d.source_ranks, vec![1, 2, 4]);
    }

    #[test]
    fn embedding_method_recorded_per_entry() {
        let d = resolve(&response(&["Flu", "Asthma", "gastroesophagael reflux"]), &matcher()).unwrap();
        let methods: Vec<_> = d.methods().collect();
        assert_eq!(methods, vec![MatchMethod::Exact, MatchMethod::Exact, MatchMethod::Embedding]);
        assert_eq!(d.entries[2], ConceptId(235595009));
    }

    #[test]
    fn unresolvable_response_rejected() {
        let t = Terminology::from_concepts([Concept::new(ConceptId(1), "Asthma (disorder)")]).unwrap();
        let m = Matcher::exact_only(TerminologyIndex::build(&t, NormalizationRules::default()));
        let err = resolve(&response(&["zzz", "yyy"]), &m).unwrap_err();
        assert!(matches!(err, IngestionError::Unresolvable { .. }));
        // a partially resolvable response keeps what it can
        let d = resolve(&response(&["zzz", "asthma"]), &m).unwrap();
        assert_eq!(d.entries, vec![ConceptId(1)]);
        assert_eq!(d.source_ranks, vec![2]);
        // no answer stays empty
        assert!(resolve(&response(&[]), &m).unwrap().entries.is_empty());
    }
}
