//! Controlled terminology: concepts, text normalization, exact lookup and the
//! embedding fallback used to resolve free-text diagnoses to concept IDs.

mod concept;
mod embedding;
mod index;
mod matcher;
mod normalize;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use thiserror::Error;

pub use concept::{split_tag_suffix, Concept, ConceptId, SemanticTag};
pub use embedding::{
    cosine, embed_queries, EmbeddingRow, EmbeddingTable, EntryKey, HashingEmbedder, PrecomputedEmbedder, TextEmbedder,
};
pub use index::TerminologyIndex;
pub use matcher::{Agreement, MatchMethod, MatchResult, Matcher};
pub use normalize::{normalize, render, NormalizationRules, NormalizedText};

#[derive(Debug, Error)]
pub enum TerminologyError {
    #[error("text is empty after normalization: {0:?}")]
    EmptyAfterNormalization(String),
    #[error("embedding dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("embedding table is empty")]
    EmptyTable,
    #[error("zero vector for {0:?}")]
    ZeroVector(String),
    #[error("no query embedding available for {0:?}")]
    MissingQueryVector(String),
    #[error("no exact match for {0:?} and no embedding fallback configured")]
    NoFallback(String),
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("duplicate concept id {0}")]
    DuplicateConcept(ConceptId),
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The full set of loaded concepts, keyed by ID.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Terminology {
    concepts: BTreeMap<ConceptId, Concept>,
}

/// Column order of the terminology TSV.
pub const TERMINOLOGY_HEADER: [&str; 5] = ["concept_id", "name", "kind", "semantic_tag", "active"];

impl Terminology {
    pub fn from_concepts(concepts: impl IntoIterator<Item = Concept>) -> Result<Self, TerminologyError> {
        let mut map = BTreeMap::new();
        for concept in concepts {
            let id = concept.concept_id;
            if map.insert(id, concept).is_some() {
                return Err(TerminologyError::DuplicateConcept(id));
            }
        }
        Ok(Terminology { concepts: map })
    }

    pub fn get(&self, id: ConceptId) -> Option<&Concept> {
        self.concepts.get(&id)
    }

    pub fn contains(&self, id: ConceptId) -> bool {
        self.concepts.contains_key(&id)
    }

    pub fn len(&self) -> usize {
        self.concepts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.concepts.is_empty()
    }

    /// Concepts in ascending ID order.
    pub fn concepts(&self) -> impl Iterator<Item = &Concept> {
        self.concepts.values()
    }

    /// Total number of names (fully specified names plus synonyms).
    pub fn entry_count(&self) -> usize {
        self.concepts.values().map(|c| 1 + c.synonyms.len()).sum()
    }

    pub fn load(path: &Path) -> Result<Self, TerminologyError> {
        let file =
            File::open(path).map_err(|source| TerminologyError::Io { path: path.display().to_string(), source })?;
        Self::read_tsv(file, &path.display().to_string())
    }

    /// Parses the TSV form: one row per name, `kind` is `fsn` or `synonym`.
    /// An empty `semantic_tag` cell falls back to the FSN suffix.
    pub fn read_tsv<R: Read>(reader: R, origin: &str) -> Result<Self, TerminologyError> {
        let parse_err =
            |line: usize, message: String| TerminologyError::Parse { path: origin.to_string(), line, message };
        let mut fsn: BTreeMap<ConceptId, (String, Option<String>, bool)> = BTreeMap::new();
        let mut synonyms: BTreeMap<ConceptId, Vec<String>> = BTreeMap::new();
        let mut lines = BufReader::new(reader).lines().enumerate();
        match lines.next() {
            Some((_, Ok(header))) => {
                let cols: Vec<&str> = header.split('\t').map(str::trim).collect();
                if cols != TERMINOLOGY_HEADER {
                    return Err(parse_err(1, format!("expected header {:?}, found {cols:?}", TERMINOLOGY_HEADER)));
                }
            }
            Some((_, Err(source))) => return Err(TerminologyError::Io { path: origin.to_string(), source }),
            None => return Err(parse_err(1, "missing header".into())),
        }
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line.map_err(|source| TerminologyError::Io { path: origin.to_string(), source })?;
            if line.trim().is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(parse_err(lineno, format!("expected 5 columns, found {}", cols.len())));
            }
            let id: ConceptId = cols[0].parse().map_err(|e| parse_err(lineno, format!("bad concept_id: {e}")))?;
            let name = cols[1].trim();
            if name.is_empty() {
                return Err(parse_err(lineno, "empty name".into()));
            }
            let active = match cols[4].trim() {
                "1" | "true" => true,
                "0" | "false" => false,
                other => return Err(parse_err(lineno, format!("bad active flag {other:?}"))),
            };
            let tag = Some(cols[3].trim()).filter(|t| !t.is_empty()).map(str::to_string);
            match cols[2].trim() {
                "fsn" => {
                    if fsn.insert(id, (name.to_string(), tag, active)).is_some() {
                        return Err(parse_err(lineno, format!("second fsn for concept {id}")));
                    }
                }
                "synonym" => synonyms.entry(id).or_default().push(name.to_string()),
                other => return Err(parse_err(lineno, format!("bad kind {other:?}"))),
            }
        }
        if let Some(id) = synonyms.keys().find(|id| !fsn.contains_key(id)) {
            return Err(parse_err(0, format!("concept {id} has synonyms but no fsn row")));
        }
        let concepts = fsn.into_iter().map(|(id, (name, tag, active))| {
            let mut concept = Concept::new(id, name);
            if let Some(tag) = tag {
                concept.semantic_tag = SemanticTag::parse(&tag);
            }
            concept.active = active;
            concept.synonyms = synonyms.remove(&id).unwrap_or_default();
            concept
        });
        Terminology::from_concepts(concepts)
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", TERMINOLOGY_HEADER.join("\t"))?;
        for c in self.concepts.values() {
            let active = if c.active { "1" } else { "0" };
            writeln!(out, "{}\t{}\tfsn\t{}\t{}", c.concept_id, c.fully_specified_name, c.semantic_tag, active)?;
            for s in &c.synonyms {
                writeln!(out, "{}\t{}\tsynonym\t{}\t{}", c.concept_id, s, c.semantic_tag, active)?;
            }
        }
        Ok(())
    }
}
