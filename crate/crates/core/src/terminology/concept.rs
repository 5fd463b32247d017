use std::fmt;
use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

/// Identifier of a terminology concept.
///
/// Serialized as a JSON string; bare integers are accepted on input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ConceptId(pub u64);

impl fmt::Display for ConceptId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for ConceptId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.trim().parse().map(ConceptId)
    }
}

impl Serialize for ConceptId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ConceptId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct Visitor;

        impl de::Visitor<'_> for Visitor {
            type Value = ConceptId;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a concept id as an integer or a numeric string")
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<ConceptId, E> {
                Ok(ConceptId(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<ConceptId, E> {
                u64::try_from(v).map(ConceptId).map_err(|_| E::custom("negative concept id"))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<ConceptId, E> {
                v.parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(Visitor)
    }
}

/// Semantic tag carried in the parenthesized suffix of a fully specified name.
///
/// The derived ordering of the named variants is the exact-match preference
/// order; `Other` tags rank last and compare by text among themselves.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SemanticTag {
    Disorder,
    Finding,
    MorphologicAbnormality,
    BodyStructure,
    Person,
    Organism,
    Specimen,
    Other(String),
}

/// Hierarchy tags recognised when stripping a suffix from free text. Anything
/// else in trailing parentheses is kept as ordinary words.
const KNOWN_TAGS: &[&str] = &[
    "disorder",
    "finding",
    "morphologic abnormality",
    "body structure",
    "person",
    "organism",
    "specimen",
    "procedure",
    "situation",
    "event",
    "substance",
    "observable entity",
    "qualifier value",
    "physical object",
    "regime/therapy",
    "product",
    "medicinal product",
    "clinical drug",
    "cell",
    "cell structure",
    "environment",
    "attribute",
    "disposition",
    "physical force",
    "record artifact",
    "social concept",
    "staging scale",
    "assessment scale",
    "tumor staging",
    "navigational concept",
];

impl SemanticTag {
    pub fn parse(text: &str) -> SemanticTag {
        match text.trim().to_lowercase().as_str() {
            "disorder" => SemanticTag::Disorder,
            "finding" => SemanticTag::Finding,
            "morphologic abnormality" => SemanticTag::MorphologicAbnormality,
            "body structure" => SemanticTag::BodyStructure,
            "person" => SemanticTag::Person,
            "organism" => SemanticTag::Organism,
            "specimen" => SemanticTag::Specimen,
            other => SemanticTag::Other(other.to_string()),
        }
    }

    pub fn as_str(&self) -> &str {
        match self {
            SemanticTag::Disorder => "disorder",
            SemanticTag::Finding => "finding",
            SemanticTag::MorphologicAbnormality => "morphologic abnormality",
            SemanticTag::BodyStructure => "body structure",
            SemanticTag::Person => "person",
            SemanticTag::Organism => "organism",
            SemanticTag::Specimen => "specimen",
            SemanticTag::Other(text) => text,
        }
    }

    pub fn is_known(text: &str) -> bool {
        let lower = text.trim().to_lowercase();
        KNOWN_TAGS.contains(&lower.as_str())
    }

    /// Position in the exact-match preference order (lower wins).
    pub fn preference(&self) -> usize {
        match self {
            SemanticTag::Disorder => 0,
            SemanticTag::Finding => 1,
            SemanticTag::MorphologicAbnormality => 2,
            SemanticTag::BodyStructure => 3,
            SemanticTag::Person => 4,
            SemanticTag::Organism => 5,
            SemanticTag::Specimen => 6,
            SemanticTag::Other(_) => 7,
        }
    }
}

impl fmt::Display for SemanticTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Splits `"Name (tag)"` into `("Name", Some("tag"))`.
///
/// Only a final, balanced parenthesized group counts as a suffix.
pub fn split_tag_suffix(name: &str) -> (&str, Option<&str>) {
    let trimmed = name.trim_end();
    if !trimmed.ends_with(')') {
        return (trimmed, None);
    }
    let Some(open) = trimmed.rfind('(') else {
        return (trimmed, None);
    };
    let inner = &trimmed[open + 1..trimmed.len() - 1];
    if inner.contains('(') || inner.contains(')') || inner.trim().is_empty() {
        return (trimmed, None);
    }
    (trimmed[..open].trim_end(), Some(inner.trim()))
}

/// One terminology entry: a fully specified name plus its synonyms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Concept {
    pub concept_id: ConceptId,
    pub fully_specified_name: String,
    pub synonyms: Vec<String>,
    #[serde(with = "tag_serde")]
    pub semantic_tag: SemanticTag,
    pub active: bool,
}

impl Concept {
    /// Builds a concept, taking the tag from the name's suffix when present.
    pub fn new(concept_id: ConceptId, fully_specified_name: impl Into<String>) -> Concept {
        let fsn = fully_specified_name.into();
        let tag = split_tag_suffix(&fsn).1.map(SemanticTag::parse).unwrap_or_else(|| SemanticTag::Other(String::new()));
        Concept { concept_id, fully_specified_name: fsn, synonyms: Vec::new(), semantic_tag: tag, active: true }
    }

    pub fn with_synonym(mut self, synonym: impl Into<String>) -> Concept {
        self.synonyms.push(synonym.into());
        self
    }

    pub fn with_tag(mut self, tag: SemanticTag) -> Concept {
        self.semantic_tag = tag;
        self
    }

    pub fn inactive(mut self) -> Concept {
        self.active = false;
        self
    }

    /// Name without the semantic tag suffix.
    pub fn preferred_text(&self) -> &str {
        split_tag_suffix(&self.fully_specified_name).0
    }

    /// The fully specified name followed by every synonym; the position is the
    /// entry index used in embedding keys.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        std::iter::once(self.fully_specified_name.as_str()).chain(self.synonyms.iter().map(String::as_str))
    }
}

mod tag_serde {
    use super::SemanticTag;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(tag: &SemanticTag, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(tag.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<SemanticTag, D::Error> {
        let text = String::deserialize(d)?;
        Ok(SemanticTag::parse(&text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suffix_extraction() {
        assert_eq!(split_tag_suffix("Chlamydial infection (disorder)"), ("Chlamydial infection", Some("disorder")));
        assert_eq!(split_tag_suffix("Influenza"), ("Influenza", None));
        assert_eq!(split_tag_suffix("Odd (name)) "), ("Odd (name))", None));
        assert_eq!(split_tag_suffix("()"), ("()", None));
    }

    #[test]
    fn tag_from_fsn() {
        let c = Concept::new(ConceptId(1), "Fracture of bone (morphologic abnormality)");
        assert_eq!(c.semantic_tag, SemanticTag::MorphologicAbnormality);
        assert_eq!(c.preferred_text(), "Fracture of bone");
        let c = Concept::new(ConceptId(2), "Appendectomy (procedure)");
        assert_eq!(c.semantic_tag, SemanticTag::Other("procedure".into()));
    }

    #[test]
    fn preference_order() {
        let order = [
            SemanticTag::Disorder,
            SemanticTag::Finding,
            SemanticTag::MorphologicAbnormality,
            SemanticTag::BodyStructure,
            SemanticTag::Person,
            SemanticTag::Organism,
            SemanticTag::Specimen,
            SemanticTag::Other("procedure".into()),
        ];
        for pair in order.windows(2) {
            assert!(pair[0].preference() < pair[1].preference());
            assert!(pair[0] < pair[1]);
        }
    }

    #[test]
    fn concept_id_json_forms() {
        let id: ConceptId = serde_json::from_str("\"840539006\"").unwrap();
        assert_eq!(id, ConceptId(840539006));
        let id: ConceptId = serde_json::from_str("12").unwrap();
        assert_eq!(id, ConceptId(12));
        assert_eq!(serde_json::to_string(&ConceptId(900000000000207008)).unwrap(), "\"900000000000207008\"");
        assert!(serde_json::from_str::<ConceptId>("-3").is_err());
    }
}
