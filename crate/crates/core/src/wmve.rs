//! Additive weight learning for ensemble members.
//!
//! On every training case each member `j` scores `s_j` in `[0, 1]` and
//! gains `s_j * (n - sum(s)) / n`. Increments never depend on the current
//! weights, so the learned weight is `1 + sum of increments`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregation::{AggregationError, MemberKey, WeightVector};
use crate::ids::{CaseId, DiagnosticianId, PromptId};
use crate::ingestion::{ResolvedCase, ResolvedDataset};
use crate::metrics::{rank_of_correct, MetricKind};
use crate::sampling::{derive_seed, sample_groups};
use crate::terminology::ConceptId;

#[derive(Debug, Error, PartialEq)]
pub enum WmveError {
    #[error("no training cases")]
    NoTrainingCases,
    #[error("ensemble has no members")]
    EmptyEnsemble,
    #[error("case {0} is not in the dataset")]
    UnknownCase(CaseId),
    #[error("member {member} has no response for case {case_id}")]
    EnsembleMemberMissingResponses { member: MemberKey, case_id: CaseId },
    #[error(transparent)]
    Weights(#[from] AggregationError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupSamplingConfig {
    pub max_groups: usize,
    pub rng_seed: u64,
}

impl Default for GroupSamplingConfig {
    fn default() -> Self {
        GroupSamplingConfig { max_groups: 100, rng_seed: 0 }
    }
}

impl GroupSamplingConfig {
    /// Sampled groups of `size` solvers out of `pool`, seeded per case.
    pub fn groups_for(&self, case_id: &CaseId, pool: usize, size: usize) -> Vec<Vec<usize>> {
        let seed = derive_seed(self.rng_seed, &["groups", case_id.as_str()]);
        sample_groups(pool, size, self.max_groups.max(1), seed)
    }
}

/// Running weights of an ensemble of `n` members.
#[derive(Debug, Clone, PartialEq)]
pub struct WmveState {
    pub weights: Vec<f64>,
    pub metric: MetricKind,
}

impl WmveState {
    pub fn new(n: usize, metric: MetricKind) -> Self {
        WmveState { weights: vec![1.0; n], metric }
    }

    pub fn n(&self) -> usize {
        self.weights.len()
    }

    /// Applies one case's member scores.
    pub fn update(&mut self, scores: &[f64]) {
        assert_eq!(scores.len(), self.weights.len(), "one score per member");
        for (w, a) in self.weights.iter_mut().zip(increments(scores)) {
            *w += a;
        }
    }
}

/// Per-member increments for one case.
pub fn increments(scores: &[f64]) -> Vec<f64> {
    let n = scores.len() as f64;
    let total: f64 = scores.iter().sum();
    scores.iter().map(|s| s * (n - total) / n).collect()
}

pub fn wmve_update(mut state: WmveState, scores: &[f64]) -> WmveState {
    state.update(scores);
    state
}

/// A member's own score on one case.
pub fn member_score(
    differential: &[ConceptId],
    correct: &std::collections::BTreeSet<ConceptId>,
    metric: MetricKind,
) -> f64 {
    metric.score(rank_of_correct(differential, correct))
}

/// Members whose weights are learned: LLMs with their chosen prompts plus
/// `n_humans` interchangeable human slots sharing one weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingEnsemble {
    pub llms: Vec<(DiagnosticianId, Option<PromptId>)>,
    pub n_humans: usize,
}

impl TrainingEnsemble {
    pub fn members(&self) -> Vec<MemberKey> {
        let mut out: Vec<MemberKey> = self.llms.iter().map(|(m, p)| MemberKey::llm(m, p)).collect();
        if self.n_humans > 0 {
            out.push(MemberKey::Human);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedWeights {
    pub weights: WeightVector,
    pub training_cases: usize,
    /// Cases that had enough solvers to form a human group.
    pub human_cases: usize,
}

fn llm_scores(
    case_id: &CaseId,
    case: &ResolvedCase,
    ensemble: &TrainingEnsemble,
    metric: MetricKind,
) -> Result<Vec<f64>, WmveError> {
    ensemble
        .llms
        .iter()
        .map(|(model, prompt)| {
            let list = case.llm(model, prompt).ok_or_else(|| WmveError::EnsembleMemberMissingResponses {
                member: MemberKey::llm(model, prompt),
                case_id: case_id.clone(),
            })?;
            Ok(member_score(list, &case.correct, metric))
        })
        .collect()
}

/// Learns member weights on `training` cases, visited in ascending ID order.
///
/// Each sampled human group of a case is run as `n_humans` concrete members
/// beside the LLMs. The case's increments are averaged over groups, and for
/// the shared human weight also over the group members. Cases with too few
/// solvers update the LLMs as an LLM-only ensemble.
pub fn learn_weights(
    data: &ResolvedDataset,
    training: &[CaseId],
    ensemble: &TrainingEnsemble,
    metric: MetricKind,
    sampling: &GroupSamplingConfig,
) -> Result<LearnedWeights, WmveError> {
    if ensemble.llms.is_empty() && ensemble.n_humans == 0 {
        return Err(WmveError::EmptyEnsemble);
    }
    let mut cases: Vec<&CaseId> = training.iter().collect();
    cases.sort();
    cases.dedup();
    if cases.is_empty() {
        return Err(WmveError::NoTrainingCases);
    }

    let n_llm = ensemble.llms.len();
    let mut llm_sum = vec![0.0; n_llm];
    let mut human_sum = 0.0;
    let mut human_cases = 0;
    for case_id in cases.iter().copied() {
        let case = data.cases.get(case_id).ok_or_else(|| WmveError::UnknownCase(case_id.clone()))?;
        let llm = llm_scores(case_id, case, ensemble, metric)?;
        let solvers: Vec<&Vec<ConceptId>> = case.humans.values().collect();
        if ensemble.n_humans == 0 || solvers.len() < ensemble.n_humans {
            if n_llm > 0 {
                for (acc, a) in llm_sum.iter_mut().zip(increments(&llm)) {
                    *acc += a;
                }
            }
            continue;
        }
        let groups = sampling.groups_for(case_id, solvers.len(), ensemble.n_humans);
        let mut case_llm = vec![0.0; n_llm];
        let mut case_human = 0.0;
        for group in &groups {
            let mut scores = llm.clone();
            scores.extend(group.iter().map(|&i| member_score(solvers[i], &case.correct, metric)));
            let alpha = increments(&scores);
            for (acc, a) in case_llm.iter_mut().zip(&alpha) {
                *acc += a;
            }
            case_human += alpha[n_llm..].iter().sum::<f64>() / ensemble.n_humans as f64;
        }
        let g = groups.len() as f64;
        for (acc, a) in llm_sum.iter_mut().zip(case_llm) {
            *acc += a / g;
        }
        human_sum += case_human / g;
        human_cases += 1;
    }

    let mut weights: BTreeMap<MemberKey, f64> =
        ensemble.llms.iter().zip(&llm_sum).map(|((m, p), s)| (MemberKey::llm(m, p), 1.0 + s)).collect();
    if ensemble.n_humans > 0 {
        weights.insert(MemberKey::Human, 1.0 + human_sum);
    }
    Ok(LearnedWeights { weights: WeightVector::new(weights)?, training_cases: cases.len(), human_cases })
}

/// On-disk form of one learned weight vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightsFile {
    pub ensemble_id: String,
    pub metric: MetricKind,
    pub weights: WeightVector,
    pub seed: u64,
}
