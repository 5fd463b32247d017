use std::collections::HashMap;

use super::normalize::{normalize, NormalizationRules};
use super::{ConceptId, SemanticTag, Terminology};

/// Exact (Jaccard = 1) lookup from normalized token sets to concepts.
///
/// Candidate lists are kept sorted by semantic-tag preference, then concept
/// ID, so the head of a list is the match.
#[derive(Debug, Clone)]
pub struct TerminologyIndex {
    rules: NormalizationRules,
    exact: HashMap<String, Vec<(ConceptId, SemanticTag)>>,
    /// Names that normalize to nothing and therefore cannot be looked up.
    unindexable: Vec<(ConceptId, String)>,
}

impl TerminologyIndex {
    /// Indexes every active concept's fully specified name and synonyms.
    pub fn build(terminology: &Terminology, rules: NormalizationRules) -> Self {
        Self::build_with(terminology, rules, false)
    }

    pub fn build_with(terminology: &Terminology, rules: NormalizationRules, include_inactive: bool) -> Self {
        let mut exact: HashMap<String, Vec<(ConceptId, SemanticTag)>> = HashMap::new();
        let mut unindexable = Vec::new();
        for concept in terminology.concepts() {
            if !concept.active && !include_inactive {
                continue;
            }
            for name in concept.names() {
                match normalize(name, &rules) {
                    Ok(n) => {
                        let slot = exact.entry(n.key()).or_default();
                        if !slot.iter().any(|(id, _)| *id == concept.concept_id) {
                            slot.push((concept.concept_id, concept.semantic_tag.clone()));
                        }
                    }
                    Err(_) => unindexable.push((concept.concept_id, name.to_string())),
                }
            }
        }
        for candidates in exact.values_mut() {
            candidates.sort_by(|a, b| a.1.preference().cmp(&b.1.preference()).then(a.0.cmp(&b.0)));
        }
        TerminologyIndex { rules, exact, unindexable }
    }

    pub fn rules(&self) -> &NormalizationRules {
        &self.rules
    }

    pub fn unindexable(&self) -> &[(ConceptId, String)] {
        &self.unindexable
    }

    pub fn key_count(&self) -> usize {
        self.exact.len()
    }

    /// All concepts whose name or synonym has the same token set as `text`,
    /// in preference order. Empty when `text` normalizes to nothing.
    pub fn candidates(&self, text: &str) -> &[(ConceptId, SemanticTag)] {
        normalize(text, &self.rules).ok().and_then(|n| self.exact.get(&n.key())).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn match_exact(&self, text: &str) -> Option<ConceptId> {
        self.candidates(text).first().map(|(id, _)| *id)
    }
}
