//! Rank of the correct diagnosis, top-k accuracy and mean reciprocal rank.
//!
//! Reciprocal rank is cut at rank 5: a correct diagnosis ranked sixth or
//! lower contributes nothing, same as an absent one.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::terminology::ConceptId;

/// Deepest rank that still counts towards MRR.
pub const RANK_CUTOFF: usize = 5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("cannot average over an empty case set")]
    EmptyCaseSet,
    #[error("unknown metric {0:?} (expected top1, top3, top5 or mrr)")]
    UnknownMetric(String),
}

/// 1-based rank of the first correct concept, or absent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RankOutcome(Option<usize>);

impl RankOutcome {
    pub const ABSENT: RankOutcome = RankOutcome(None);

    pub fn at(rank: usize) -> RankOutcome {
        assert!(rank >= 1, "ranks start at 1");
        RankOutcome(Some(rank))
    }

    pub fn rank(self) -> Option<usize> {
        self.0
    }

    pub fn is_absent(self) -> bool {
        self.0.is_none()
    }

    /// Rank category 1..=5, or `None` for absent and ranks beyond the cutoff.
    pub fn category(self) -> Option<usize> {
        self.0.filter(|&r| r <= RANK_CUTOFF)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Top1,
    Top3,
    Top5,
    Mrr,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [MetricKind::Top1, MetricKind::Top3, MetricKind::Top5, MetricKind::Mrr];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Top1 => "top1",
            MetricKind::Top3 => "top3",
            MetricKind::Top5 => "top5",
            MetricKind::Mrr => "mrr",
        }
    }

    /// Per-case score in [0, 1].
    pub fn score(self, outcome: RankOutcome) -> f64 {
        match self {
            MetricKind::Top1 => indicator(top_k(outcome, 1)),
            MetricKind::Top3 => indicator(top_k(outcome, 3)),
            MetricKind::Top5 => indicator(top_k(outcome, 5)),
            MetricKind::Mrr => reciprocal_rank(outcome),
        }
    }
}

impl fmt::Display for MetricKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MetricKind {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, MetricsError> {
        match s.trim().to_lowercase().as_str() {
            "top1" | "top-1" => Ok(MetricKind::Top1),
            "top3" | "top-3" => Ok(MetricKind::Top3),
            "top5" | "top-5" => Ok(MetricKind::Top5),
            "mrr" => Ok(MetricKind::Mrr),
            _ => Err(MetricsError::UnknownMetric(s.to_string())),
        }
    }
}

fn indicator(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// Position of the first concept in `differential` that belongs to `correct`.
pub fn rank_of_correct(differential: &[ConceptId], correct: &BTreeSet<ConceptId>) -> RankOutcome {
    differential.iter().position(|c| correct.contains(c)).map_or(RankOutcome::ABSENT, |i| RankOutcome::at(i + 1))
}

pub fn reciprocal_rank(outcome: RankOutcome) -> f64 {
    match outcome.category() {
        Some(r) => 1.0 / r as f64,
        None => 0.0,
    }
}

pub fn top_k(outcome: RankOutcome, k: usize) -> bool {
    outcome.rank().is_some_and(|r| r <= k)
}

pub fn mean_over_cases(values: &[f64]) -> Result<f64, MetricsError> {
    if values.is_empty() {
        return Err(MetricsError::EmptyCaseSet);
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Mean of `metric` over a set of outcomes.
pub fn summarize(outcomes: &[RankOutcome], metric: MetricKind) -> Result<f64, MetricsError> {
    let scores: Vec<f64> = outcomes.iter().map(|&o| metric.score(o)).collect();
    mean_over_cases(&scores)
}
