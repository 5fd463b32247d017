//! Weighted 1/r aggregation of several differentials into one collective
//! differential.
//!
//! Each member `j` adds `w_j / r` to every concept it lists at rank `r`.
//! Concepts are ordered by total score (descending), then by the best rank
//! any positively weighted member gave them, then by concept ID.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::ids::{CaseId, DiagnosticianId, PromptId};
use crate::terminology::ConceptId;

#[derive(Debug, Error, PartialEq)]
pub enum AggregationError {
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("differentials belong to different cases ({0} and {1})")]
    MixedCases(CaseId, CaseId),
    #[error("no weight for member {0}")]
    MissingWeight(MemberKey),
    #[error("weight for {member} must be finite and nonnegative, got {value}")]
    InvalidWeight { member: String, value: f64 },
    #[error("all weights are zero")]
    AllZero,
    #[error("bad member key {0:?}")]
    BadMemberKey(String),
}

/// Aggregation slot: one LLM configuration, or the shared human slot.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MemberKey {
    Llm { model: DiagnosticianId, prompt: Option<PromptId> },
    Human,
}

impl MemberKey {
    pub fn llm(model: &DiagnosticianId, prompt: &Option<PromptId>) -> MemberKey {
        MemberKey::Llm { model: model.clone(), prompt: prompt.clone() }
    }
}

impl fmt::Display for MemberKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MemberKey::Human => f.write_str("human"),
            MemberKey::Llm { model, prompt: None } => write!(f, "{model}"),
            MemberKey::Llm { model, prompt: Some(p) } => write!(f, "{model}@{p}"),
        }
    }
}

impl FromStr for MemberKey {
    type Err = AggregationError;

    /// `human`, `<model>` or `<model>@<prompt>`.
    fn from_str(s: &str) -> Result<Self, AggregationError> {
        let s = s.trim();
        if s == "human" {
            return Ok(MemberKey::Human);
        }
        let (model, prompt) = match s.split_once('@') {
            Some((m, p)) => (m, Some(p)),
            None => (s, None),
        };
        if model.is_empty() || prompt.is_some_and(str::is_empty) {
            return Err(AggregationError::BadMemberKey(s.to_string()));
        }
        Ok(MemberKey::Llm { model: model.into(), prompt: prompt.map(PromptId::from) })
    }
}

impl Serialize for MemberKey {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for MemberKey {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Nonnegative per-member weights, at least one positive.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct WeightVector {
    weights: BTreeMap<MemberKey, f64>,
}

impl WeightVector {
    pub fn new(weights: BTreeMap<MemberKey, f64>) -> Result<Self, AggregationError> {
        for (k, &w) in &weights {
            if !w.is_finite() || w < 0.0 {
                return Err(AggregationError::InvalidWeight { member: k.to_string(), value: w });
            }
        }
        if !weights.values().any(|&w| w > 0.0) {
            return Err(AggregationError::AllZero);
        }
        Ok(WeightVector { weights })
    }

    /// Weight 1 for every listed member.
    pub fn uniform(members: impl IntoIterator<Item = MemberKey>) -> Self {
        WeightVector { weights: members.into_iter().map(|m| (m, 1.0)).collect() }
    }

    pub fn get(&self, member: &MemberKey) -> Option<f64> {
        self.weights.get(member).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&MemberKey, f64)> {
        self.weights.iter().map(|(k, &w)| (k, w))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// One member's differential for one case.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberInput<'a> {
    pub member: MemberKey,
    pub case_id: &'a CaseId,
    pub entries: &'a [ConceptId],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoredConcept {
    pub concept_id: ConceptId,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CollectiveDifferential {
    pub case_id: CaseId,
    pub ranking: Vec<ScoredConcept>,
}

impl CollectiveDifferential {
    pub fn concepts(&self) -> Vec<ConceptId> {
        self.ranking.iter().map(|s| s.concept_id).collect()
    }

    /// First `min(k, len)` entries.
    pub fn truncate(&self, k: usize) -> CollectiveDifferential {
        assert!(k >= 1, "truncate needs k >= 1");
        CollectiveDifferential {
            case_id: self.case_id.clone(),
            ranking: self.ranking.iter().take(k).cloned().collect(),
        }
    }
}

/// Scores and orders the union of `lists`, each paired with its weight.
/// Zero-weight lists are ignored entirely.
pub fn rank_weighted<'a>(lists: impl IntoIterator<Item = (f64, &'a [ConceptId])>) -> Vec<ScoredConcept> {
    let mut acc: HashMap<ConceptId, (Vec<f64>, usize)> = HashMap::new();
    for (weight, list) in lists {
        if weight <= 0.0 {
            continue;
        }
        for (i, &concept) in list.iter().enumerate() {
            let slot = acc.entry(concept).or_insert_with(|| (Vec::new(), usize::MAX));
            slot.0.push(weight / (i + 1) as f64);
            slot.1 = slot.1.min(i + 1);
        }
    }
    let mut scored: Vec<(ConceptId, f64, usize)> = acc
        .into_iter()
        .map(|(concept, (mut parts, best))| {
            // fixed summation order makes the total independent of member order
            parts.sort_by(f64::total_cmp);
            (concept, parts.iter().sum::<f64>(), best)
        })
        .filter(|(_, score, _)| *score > 0.0)
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.2.cmp(&b.2)).then(a.0.cmp(&b.0)));
    scored.into_iter().map(|(concept_id, score, _)| ScoredConcept { concept_id, score }).collect()
}

/// Aggregates the members' differentials for one case under `weights`.
pub fn aggregate(
    inputs: &[MemberInput<'_>],
    weights: &WeightVector,
) -> Result<CollectiveDifferential, AggregationError> {
    let first = inputs.first().ok_or(AggregationError::EmptyEnsemble)?;
    let mut lists = Vec::with_capacity(inputs.len());
    for input in inputs {
        if input.case_id != first.case_id {
            return Err(AggregationError::MixedCases(first.case_id.clone(), input.case_id.clone()));
        }
        let w = weights.get(&input.member).ok_or_else(|| AggregationError::MissingWeight(input.member.clone()))?;
        lists.push((w, input.entries));
    }
    Ok(CollectiveDifferential { case_id: first.case_id.clone(), ranking: rank_weighted(lists) })
}
