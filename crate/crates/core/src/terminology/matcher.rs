use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ConceptId, EmbeddingTable, TerminologyError, TerminologyIndex, TextEmbedder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMethod {
    Exact,
    Embedding,
}

impl fmt::Display for MatchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MatchMethod::Exact => "exact",
            MatchMethod::Embedding => "embedding",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub concept_id: ConceptId,
    pub method: MatchMethod,
    /// Cosine similarity, embedding matches only.
    pub similarity: Option<f64>,
}

/// Exact matching with an optional embedding fallback.
pub struct Matcher {
    index: TerminologyIndex,
    fallback: Option<(EmbeddingTable, Box<dyn TextEmbedder>)>,
}

impl fmt::Debug for Matcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Matcher")
            .field("keys", &self.index.key_count())
            .field("embedding_rows", &self.fallback.as_ref().map(|(t, _)| t.len()))
            .finish()
    }
}

impl Matcher {
    pub fn exact_only(index: TerminologyIndex) -> Self {
        Matcher { index, fallback: None }
    }

    pub fn with_embeddings(index: TerminologyIndex, table: EmbeddingTable, embedder: Box<dyn TextEmbedder>) -> Self {
        Matcher { index, fallback: Some((table, embedder)) }
    }

    pub fn index(&self) -> &TerminologyIndex {
        &self.index
    }

    pub fn has_fallback(&self) -> bool {
        self.fallback.is_some()
    }

    pub fn match_exact(&self, text: &str) -> Option<MatchResult> {
        self.index.match_exact(text).map(|concept_id| MatchResult {
            concept_id,
            method: MatchMethod::Exact,
            similarity: None,
        })
    }

    pub fn match_embedding(&self, text: &str) -> Result<MatchResult, TerminologyError> {
        let (table, embedder) = self.fallback.as_ref().ok_or_else(|| TerminologyError::NoFallback(text.to_string()))?;
        let query = embedder.embed(text)?;
        let (concept_id, similarity) = table.nearest(&query)?;
        Ok(MatchResult { concept_id, method: MatchMethod::Embedding, similarity: Some(similarity) })
    }

    /// Exact match when one exists, otherwise the nearest embedding.
    pub fn resolve(&self, text: &str) -> Result<MatchResult, TerminologyError> {
        match self.match_exact(text) {
            Some(hit) => Ok(hit),
            None => self.match_embedding(text),
        }
    }

    /// Runs both methods on every exact-matchable string and counts how often
    /// they agree. Strings without an exact match are ignored.
    pub fn agreement<'a>(&self, texts: impl IntoIterator<Item = &'a str>) -> Result<Agreement, TerminologyError> {
        let mut out = Agreement::default();
        for text in texts {
            let Some(exact) = self.match_exact(text) else { continue };
            let emb = self.match_embedding(text)?;
            out.compared += 1;
            if emb.concept_id == exact.concept_id {
                out.agreed += 1;
            } else {
                out.disagreements.push((text.to_string(), exact.concept_id, emb.concept_id));
            }
        }
        Ok(out)
    }
}

/// Outcome of the dual-method sanity check.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Agreement {
    pub compared: usize,
    pub agreed: usize,
    /// (text, exact concept, embedding concept)
    pub disagreements: Vec<(String, ConceptId, ConceptId)>,
}

impl Agreement {
    pub fn rate(&self) -> Option<f64> {
        (self.compared > 0).then(|| self.agreed as f64 / self.compared as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::terminology::{Concept, EntryKey, HashingEmbedder, NormalizationRules, Terminology};

    fn fixture() -> Matcher {
        let t = Terminology::from_concepts([
            Concept::new(ConceptId(105629000), "Chlamydial infection (disorder)").with_synonym("Chlamydia infection"),
            Concept::new(ConceptId(86406008), "Human immunodeficiency virus infection (disorder)"),
            Concept::new(ConceptId(6142004), "Influenza (disorder)"),
        ])
        .unwrap();
        let embedder = HashingEmbedder { dimension: 128 };
        let table = EmbeddingTable::from_terminology(&t, &embedder, 128).unwrap();
        Matcher::with_embeddings(TerminologyIndex::build(&t, NormalizationRules::default()), table, Box::new(embedder))
    }

    #[test]
    fn exact_wins_when_available() {
        let m = fixture();
        let r = m.resolve("Chlamydia infection").unwrap();
        assert_eq!(r, MatchResult { concept_id: ConceptId(105629000), method: MatchMethod::Exact, similarity: None });
    }

    #[test]
    fn fallback_to_embedding() {
        let m = fixture();
        let r = m.resolve("Human immunodeficiency virus disease").unwrap();
        assert_eq!(r.concept_id, ConceptId(86406008));
        assert_eq!(r.method, MatchMethod::Embedding);
        let sim = r.similarity.unwrap();
        assert!((-1.0..=1.0).contains(&sim));
        // stopword-only text has no exact key but still gets a nearest concept
        assert_eq!(m.resolve("influenzza").unwrap().concept_id, ConceptId(6142004));
    }

    #[test]
    fn exact_only_reports_missing_fallback() {
        let t = Terminology::from_concepts([Concept::new(ConceptId(1), "Asthma (disorder)")]).unwrap();
        let m = Matcher::exact_only(TerminologyIndex::build(&t, NormalizationRules::default()));
        assert!(m.resolve("asthma").is_ok());
        assert!(matches!(m.resolve("asthmaa"), Err(TerminologyError::NoFallback(_))));
    }

    #[test]
    fn dimension_mismatch_propagates() {
        let t = Terminology::from_concepts([Concept::new(ConceptId(1), "Asthma (disorder)")]).unwrap();
        let mut table = EmbeddingTable::new(4);
        table.insert(EntryKey { concept_id: ConceptId(1), index: 0 }, vec![1.0, 0.0, 0.0, 0.0]).unwrap();
        let m = Matcher::with_embeddings(
            TerminologyIndex::build(&t, NormalizationRules::default()),
            table,
            Box::new(HashingEmbedder { dimension: 8 }),
        );
        assert!(matches!(m.resolve("wheeze"), Err(TerminologyError::DimensionMismatch { expected: 4, actual: 8 })));
    }

    #[test]
    fn agreement_on_exact_strings() {
        let m = fixture();
        let a = m
            .agreement(["Chlamydia infection", "Influenza", "Human immunodeficiency virus infection", "nonsense xyz"])
            .unwrap();
        assert_eq!(a.compared, 3);
        assert_eq!(a.agreed, 3);
        assert_eq!(a.rate(), Some(1.0));
    }
}
