//! Cross-validated evaluation of LLM, human and hybrid ensembles, plus
//! pairwise analytics.

mod analytics;
mod engine;
mod folds;
pub mod report;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

pub use analytics::{
    agreement_stats, analyze_pair, complementarity, outperformance, AgreementStats, ComplementarityMatrix,
    OutperformanceReport, PairAnalysis, PhysicianVerdict, RANK_LABELS,
};
pub use engine::{
    case_samples, evaluate_ensemble, run_evaluation, select_prompt, train_fold, EnsembleResult, EvaluationPlan,
    EvaluationReport, FoldModel, WeightingMode,
};
pub use folds::{make_folds, make_stratified_folds, FoldAssignment};

use crate::aggregation::AggregationError;
use crate::ids::{CaseId, DiagnosticianId, PromptId};
use crate::metrics::MetricsError;
use crate::sampling::combinations;
use crate::wmve::WmveError;

#[derive(Debug, Error, PartialEq)]
pub enum EvaluationError {
    #[error("{cases} cases cannot fill {k} folds")]
    TooFewCases { cases: usize, k: usize },
    #[error("{model} has no response for prompt {prompt:?} on case {case_id}")]
    MissingPromptResponses { model: DiagnosticianId, prompt: Option<PromptId>, case_id: CaseId },
    #[error("{model} has no responses at all")]
    NoPrompts { model: DiagnosticianId },
    #[error("unknown LLM {0}")]
    UnknownLlm(String),
    #[error("bad ensemble spec {0:?}")]
    BadSpec(String),
    #[error("between 1 and 8 LLMs are needed to enumerate ensembles, got {0}")]
    LlmCount(usize),
    #[error("ensemble {spec}: fold {fold} has no usable {role} cases")]
    NoEligibleCases { spec: String, fold: usize, role: &'static str },
    #[error("the two sides share no evaluation case")]
    NoOverlappingCases,
    #[error(transparent)]
    Wmve(#[from] WmveError),
    #[error(transparent)]
    Aggregation(#[from] AggregationError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// A set of LLMs plus a number of human slots.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EnsembleSpec {
    pub llms: Vec<DiagnosticianId>,
    pub n_humans: usize,
}

impl EnsembleSpec {
    pub fn new(llms: Vec<DiagnosticianId>, n_humans: usize) -> Result<Self, EvaluationError> {
        let spec = EnsembleSpec { llms, n_humans };
        let mut seen = spec.llms.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != spec.llms.len()
            || (spec.llms.is_empty() && n_humans == 0)
            || spec.llms.iter().any(|m| m.as_str().is_empty() || m.as_str().contains('|'))
        {
            return Err(EvaluationError::BadSpec(spec.to_string()));
        }
        Ok(spec)
    }

    pub fn llm(model: &str) -> Self {
        EnsembleSpec { llms: vec![model.into()], n_humans: 0 }
    }

    pub fn humans(n: usize) -> Self {
        EnsembleSpec { llms: Vec::new(), n_humans: n }
    }

    pub fn with_humans(&self, n: usize) -> Self {
        EnsembleSpec { llms: self.llms.clone(), n_humans: n }
    }

    pub fn size(&self) -> usize {
        self.llms.len() + self.n_humans
    }
}

impl fmt::Display for EnsembleSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self.llms.iter().map(ToString::to_string).collect();
        if self.n_humans > 0 {
            parts.push(format!("humans:{}", self.n_humans));
        }
        f.write_str(&parts.join("|"))
    }
}

impl FromStr for EnsembleSpec {
    type Err = EvaluationError;

    /// `|`-separated LLM IDs, optionally with one `humans:N` item.
    fn from_str(s: &str) -> Result<Self, EvaluationError> {
        let bad = || EvaluationError::BadSpec(s.to_string());
        let mut llms = Vec::new();
        let mut n_humans = None;
        for part in s.split('|').map(str::trim) {
            if let Some(n) = part.strip_prefix("humans:") {
                let n: usize = n.parse().map_err(|_| bad())?;
                if n == 0 || n_humans.replace(n).is_some() {
                    return Err(bad());
                }
            } else if part.is_empty() {
                return Err(bad());
            } else {
                llms.push(DiagnosticianId::from(part));
            }
        }
        EnsembleSpec::new(llms, n_humans.unwrap_or(0)).map_err(|_| bad())
    }
}

impl Serialize for EnsembleSpec {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EnsembleSpec {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        String::deserialize(deserializer)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Every nonempty LLM subset, smallest first, lexicographic within a size.
pub fn enumerate_llm_ensembles(llms: &[DiagnosticianId]) -> Result<Vec<EnsembleSpec>, EvaluationError> {
    if llms.is_empty() || llms.len() > 8 {
        return Err(EvaluationError::LlmCount(llms.len()));
    }
    let mut out = Vec::with_capacity((1 << llms.len()) - 1);
    for size in 1..=llms.len() {
        for combo in combinations(llms.len(), size) {
            out.push(EnsembleSpec::new(combo.iter().map(|&i| llms[i].clone()).collect(), 0)?);
        }
    }
    Ok(out)
}
