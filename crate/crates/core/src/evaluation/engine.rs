use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EnsembleSpec, EvaluationError, FoldAssignment};
use crate::aggregation::{aggregate, MemberInput, MemberKey, WeightVector};
use crate::ids::{CaseId, DiagnosticianId, PromptId};
use crate::ingestion::{ResolvedCase, ResolvedDataset};
use crate::metrics::{mean_over_cases, rank_of_correct, MetricKind};
use crate::sampling::derive_seed;
use crate::terminology::ConceptId;
use crate::wmve::{learn_weights, GroupSamplingConfig, TrainingEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightingMode {
    Weighted,
    Unweighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationPlan {
    pub seed: u64,
    pub metrics: Vec<MetricKind>,
    pub max_groups: usize,
    /// Ensembles with human slots only use cases with at least this many
    /// solvers (and never fewer than the slot count).
    pub min_human_solvers: usize,
    pub mode: WeightingMode,
    /// Fit prompts and weights with this metric for every reported metric.
    /// `None` fits each metric on its own.
    #[serde(default)]
    pub fit_metric: Option<MetricKind>,
}

impl Default for EvaluationPlan {
    fn default() -> Self {
        EvaluationPlan {
            seed: 0,
            metrics: MetricKind::ALL.to_vec(),
            max_groups: 100,
            min_human_solvers: 0,
            mode: WeightingMode::Weighted,
            fit_metric: None,
        }
    }
}

impl EvaluationPlan {
    fn sampling(&self, stream: &str, spec: &EnsembleSpec, metric: MetricKind, fold: usize) -> GroupSamplingConfig {
        let seed = derive_seed(self.seed, &[stream, &spec.to_string(), metric.name(), &fold.to_string()]);
        GroupSamplingConfig { max_groups: self.max_groups.max(1), rng_seed: seed }
    }

    pub fn admits(&self, spec: &EnsembleSpec, case: &ResolvedCase) -> bool {
        spec.n_humans == 0 || case.solver_count() >= spec.n_humans.max(self.min_human_solvers)
    }
}

/// What was fitted on one training fold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldModel {
    pub prompts: BTreeMap<DiagnosticianId, Option<PromptId>>,
    pub weights: WeightVector,
    pub training_cases: usize,
}

/// Best prompt of `model` on `training` under `metric`; ties go to the
/// smallest prompt ID.
pub fn select_prompt(
    data: &ResolvedDataset,
    model: &DiagnosticianId,
    training: &[CaseId],
    metric: MetricKind,
) -> Result<Option<PromptId>, EvaluationError> {
    let prompts = data.prompts(model);
    if prompts.is_empty() {
        return Err(EvaluationError::NoPrompts { model: model.clone() });
    }
    let mut best: Option<(u64, Option<PromptId>)> = None;
    for prompt in prompts {
        // scores are multiples of 1/60
        let mut total = 0u64;
        for case_id in training {
            let missing = || EvaluationError::MissingPromptResponses {
                model: model.clone(),
                prompt: prompt.clone(),
                case_id: case_id.clone(),
            };
            let case = data.cases.get(case_id).ok_or_else(missing)?;
            let list = case.llm(model, &prompt).ok_or_else(missing)?;
            total += (metric.score(rank_of_correct(list, &case.correct)) * 60.0).round() as u64;
        }
        if best.as_ref().is_none_or(|(b, _)| total > *b) {
            best = Some((total, prompt));
        }
    }
    Ok(best.map(|(_, p)| p).unwrap_or_default())
}

/// Selects prompts and learns weights for `spec` on one training fold.
pub fn train_fold(
    data: &ResolvedDataset,
    spec: &EnsembleSpec,
    metric: MetricKind,
    fold: usize,
    prompt_cases: &[CaseId],
    weight_cases: &[CaseId],
    plan: &EvaluationPlan,
) -> Result<FoldModel, EvaluationError> {
    let mut prompts = BTreeMap::new();
    for model in &spec.llms {
        if !data.diagnosticians.get(model).is_some_and(|d| d.is_llm()) {
            return Err(EvaluationError::UnknownLlm(model.to_string()));
        }
        prompts.insert(model.clone(), select_prompt(data, model, prompt_cases, metric)?);
    }
    let ensemble = TrainingEnsemble {
        llms: spec.llms.iter().map(|m| (m.clone(), prompts[m].clone())).collect(),
        n_humans: spec.n_humans,
    };
    let weights = match plan.mode {
        WeightingMode::Weighted => {
            let sampling = plan.sampling("learn", spec, metric, fold);
            learn_weights(data, weight_cases, &ensemble, metric, &sampling)?.weights
        }
        WeightingMode::Unweighted => WeightVector::uniform(ensemble.members()),
    };
    Ok(FoldModel { prompts, weights, training_cases: weight_cases.len() })
}

/// Collective differentials of `spec` on one case: one per sampled human
/// group, or a single one without human slots.
pub fn case_samples(
    case_id: &CaseId,
    case: &ResolvedCase,
    spec: &EnsembleSpec,
    model: &FoldModel,
    sampling: &GroupSamplingConfig,
) -> Result<Vec<Vec<ConceptId>>, EvaluationError> {
    let mut inputs = Vec::with_capacity(spec.size());
    for m in &spec.llms {
        let prompt = model.prompts.get(m).cloned().unwrap_or_default();
        let entries = case.llm(m, &prompt).ok_or_else(|| EvaluationError::MissingPromptResponses {
            model: m.clone(),
            prompt: prompt.clone(),
            case_id: case_id.clone(),
        })?;
        inputs.push(MemberInput { member: MemberKey::llm(m, &prompt), case_id, entries });
    }
    if spec.n_humans == 0 {
        return Ok(vec![aggregate(&inputs, &model.weights)?.concepts()]);
    }
    let solvers: Vec<&Vec<ConceptId>> = case.humans.values().collect();
    let mut out = Vec::new();
    for group in sampling.groups_for(case_id, solvers.len(), spec.n_humans) {
        let mut members = inputs.clone();
        members.extend(group.iter().map(|&i| MemberInput { member: MemberKey::Human, case_id, entries: solvers[i] }));
        out.push(aggregate(&members, &model.weights)?.concepts());
    }
    Ok(out)
}

/// One fold: the fitted model and the collective differentials of each
/// evaluation case.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct FoldRun {
    pub model: FoldModel,
    pub samples: BTreeMap<CaseId, Vec<Vec<ConceptId>>>,
    pub seed: u64,
}

/// Trains on each fold and evaluates on the other folds.
pub(crate) fn run_folds(
    data: &ResolvedDataset,
    spec: &EnsembleSpec,
    folds: &FoldAssignment,
    metric: MetricKind,
    plan: &EvaluationPlan,
) -> Result<Vec<FoldRun>, EvaluationError> {
    let all = folds.folds();
    let mut out = Vec::with_capacity(folds.k);
    for (f, fold_cases) in all.iter().enumerate() {
        let eligible = |c: &&CaseId| data.cases.get(*c).is_some_and(|case| plan.admits(spec, case));
        let training: Vec<CaseId> = fold_cases.iter().filter(eligible).cloned().collect();
        if training.is_empty() {
            return Err(EvaluationError::NoEligibleCases { spec: spec.to_string(), fold: f, role: "training" });
        }
        let fit = plan.fit_metric.unwrap_or(metric);
        let model = train_fold(data, spec, fit, f, fold_cases, &training, plan)?;
        let sampling = plan.sampling("evaluate", spec, fit, f);
        let mut samples = BTreeMap::new();
        for (case_id, case) in &data.cases {
            if folds.fold_of(case_id).is_none_or(|g| g == f) || !plan.admits(spec, case) {
                continue;
            }
            samples.insert(case_id.clone(), case_samples(case_id, case, spec, &model, &sampling)?);
        }
        if samples.is_empty() {
            return Err(EvaluationError::NoEligibleCases { spec: spec.to_string(), fold: f, role: "evaluation" });
        }
        out.push(FoldRun { model, samples, seed: sampling.rng_seed });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleResult {
    pub spec: EnsembleSpec,
    pub metric: MetricKind,
    pub fold_values: Vec<f64>,
    pub mean: f64,
    pub eval_cases: Vec<usize>,
    pub models: Vec<FoldModel>,
    /// Group sampling seed used on each evaluation fold.
    pub seeds: Vec<u64>,
}

/// Per-fold means of `metric` for `spec`, and their average.
pub fn evaluate_ensemble(
    data: &ResolvedDataset,
    spec: &EnsembleSpec,
    folds: &FoldAssignment,
    metric: MetricKind,
    plan: &EvaluationPlan,
) -> Result<EnsembleResult, EvaluationError> {
    let runs = run_folds(data, spec, folds, metric, plan)?;
    let mut fold_values = Vec::with_capacity(runs.len());
    for run in &runs {
        let mut per_case = Vec::with_capacity(run.samples.len());
        for (case_id, samples) in &run.samples {
            let correct = &data.cases[case_id].correct;
            let scores: Vec<f64> = samples.iter().map(|s| metric.score(rank_of_correct(s, correct))).collect();
            per_case.push(mean_over_cases(&scores)?);
        }
        fold_values.push(mean_over_cases(&per_case)?);
    }
    Ok(EnsembleResult {
        spec: spec.clone(),
        metric,
        mean: mean_over_cases(&fold_values)?,
        eval_cases: runs.iter().map(|r| r.samples.len()).collect(),
        seeds: runs.iter().map(|r| r.seed).collect(),
        models: runs.into_iter().map(|r| r.model).collect(),
        fold_values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationReport {
    pub plan: EvaluationPlan,
    pub folds: FoldAssignment,
    /// metric -> fold -> LLM -> chosen prompt, over every LLM in the data.
    pub selected_prompts: BTreeMap<MetricKind, Vec<BTreeMap<DiagnosticianId, Option<PromptId>>>>,
    pub results: Vec<EnsembleResult>,
}

impl EvaluationReport {
    pub fn result(&self, spec: &EnsembleSpec, metric: MetricKind) -> Option<&EnsembleResult> {
        self.results.iter().find(|r| &r.spec == spec && r.metric == metric)
    }
}

/// Evaluates every `(spec, metric)` pair in parallel; output order follows
/// `specs` then `plan.metrics`.
pub fn run_evaluation(
    data: &ResolvedDataset,
    specs: &[EnsembleSpec],
    folds: &FoldAssignment,
    plan: &EvaluationPlan,
) -> Result<EvaluationReport, EvaluationError> {
    let jobs: Vec<(&EnsembleSpec, MetricKind)> =
        specs.iter().flat_map(|s| plan.metrics.iter().map(move |&m| (s, m))).collect();
    let results = jobs
        .par_iter()
        .map(|(spec, metric)| evaluate_ensemble(data, spec, folds, *metric, plan))
        .collect::<Result<Vec<_>, _>>()?;

    let fold_cases = folds.folds();
    let mut selected_prompts = BTreeMap::new();
    for &metric in &plan.metrics {
        let mut per_fold = Vec::with_capacity(folds.k);
        for cases in &fold_cases {
            let mut chosen = BTreeMap::new();
            for model in data.llm_ids() {
                chosen.insert(model.clone(), select_prompt(data, &model, cases, plan.fit_metric.unwrap_or(metric))?);
            }
            per_fold.push(chosen);
        }
        selected_prompts.insert(metric, per_fold);
    }
    Ok(EvaluationReport { plan: plan.clone(), folds: folds.clone(), selected_prompts, results })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::make_folds;
    use crate::ingestion::{Diagnostician, Tenure};

    /// Ten cases, correct concept 1; `rank(i)` places it for LLM `m` / prompt `p`.
    fn data(llm_rank: impl Fn(&str, &str, usize) -> usize, human_ranks: &[Vec<usize>]) -> ResolvedDataset {
        let mut ds = ResolvedDataset::default();
        let list = |r: usize| -> Vec<ConceptId> {
            (1..=6).map(|p| if p == r { ConceptId(1) } else { ConceptId(100 + p as u64) }).collect()
        };
        for m in ["a", "b"] {
            ds.diagnosticians.insert(m.into(), Diagnostician::llm(m, m));
        }
        for (h, _) in human_ranks.first().into_iter().flatten().enumerate() {
            let id = format!("h{h}");
            ds.diagnosticians.insert(id.as_str().into(), Diagnostician::human(&id, Tenure::Attending));
        }
        for i in 0..10 {
            let mut case = ResolvedCase { correct: [ConceptId(1)].into(), ..ResolvedCase::default() };
            for m in ["a", "b"] {
                for p in ["p1", "p2"] {
                    case.llms.insert((m.into(), Some(p.into())), list(llm_rank(m, p, i)));
                }
            }
            if let Some(row) = human_ranks.get(i) {
                for (h, &r) in row.iter().enumerate() {
                    case.humans.insert(format!("h{h}").into(), list(r));
                }
            }
            ds.cases.insert(format!("c{i}").into(), case);
        }
        ds
    }

    #[test]
    fn prompt_selection() {
        let ds = data(|_, p, _| if p == "p2" { 2 } else { 4 }, &[]);
        let cases: Vec<CaseId> = ds.cases.keys().cloned().collect();
        // both prompts hit top-5, p2 better on top-3
        assert_eq!(select_prompt(&ds, &"a".into(), &cases, MetricKind::Top5).unwrap(), Some("p1".into()));
        assert_eq!(select_prompt(&ds, &"a".into(), &cases, MetricKind::Top3).unwrap(), Some("p2".into()));
        assert!(matches!(
            select_prompt(&ds, &"zz".into(), &cases, MetricKind::Top3),
            Err(EvaluationError::NoPrompts { .. })
        ));
        let mut missing = ds.clone();
        missing.cases.get_mut(&CaseId::from("c3")).unwrap().llms.remove(&("a".into(), Some("p2".into())));
        assert!(matches!(
            select_prompt(&missing, &"a".into(), &cases, MetricKind::Top3),
            Err(EvaluationError::MissingPromptResponses { .. })
        ));
    }

    #[test]
    fn single_llm_identity() {
        let ds = data(|_, _, i| i % 7, &[]);
        let folds = make_folds(ds.cases.keys(), 5, 3).unwrap();
        let r = evaluate_ensemble(&ds, &EnsembleSpec::llm("a"), &folds, MetricKind::Mrr, &EvaluationPlan::default())
            .unwrap();
        // each fold evaluates the 8 cases outside it
        for (f, v) in r.fold_values.iter().enumerate() {
            let outside: Vec<f64> = ds
                .cases
                .keys()
                .filter(|c| folds.fold_of(c) != Some(f))
                .map(|c| {
                    let i: usize = c.as_str()[1..].parse().unwrap();
                    let rank = i % 7;
                    if rank == 0 || rank > 5 {
                        0.0
                    } else {
                        1.0 / rank as f64
                    }
                })
                .collect();
            assert_eq!(outside.len(), 8);
            assert!((v - outside.iter().sum::<f64>() / 8.0).abs() < 1e-12);
        }
        let mean = r.fold_values.iter().sum::<f64>() / 5.0;
        assert!((r.mean - mean).abs() < 1e-15);
    }

    #[test]
    fn one_human_is_mean_over_solvers() {
        let humans: Vec<Vec<usize>> = (0..10).map(|i| vec![1, (i % 3) + 1, 0]).collect();
        let ds = data(|_, _, _| 1, &humans);
        let folds = make_folds(ds.cases.keys(), 5, 3).unwrap();
        let r = evaluate_ensemble(&ds, &EnsembleSpec::humans(1), &folds, MetricKind::Top1, &EvaluationPlan::default())
            .unwrap();
        for (f, v) in r.fold_values.iter().enumerate() {
            let per_case: Vec<f64> = (0..10)
                .filter(|i| folds.fold_of(&format!("c{i}").into()) != Some(f))
                .map(|i| {
                    let hits = humans[i].iter().filter(|&&r| r == 1).count();
                    hits as f64 / 3.0
                })
                .collect();
            assert!((v - per_case.iter().sum::<f64>() / per_case.len() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn hybrid_cases_need_enough_solvers() {
        let humans: Vec<Vec<usize>> = (0..10).map(|i| if i < 5 { vec![1, 2] } else { vec![1] }).collect();
        let ds = data(|_, _, _| 3, &humans);
        let folds = make_folds(ds.cases.keys(), 2, 1).unwrap();
        let spec: EnsembleSpec = "a|humans:2".parse().unwrap();
        let r = evaluate_ensemble(&ds, &spec, &folds, MetricKind::Top1, &EvaluationPlan::default());
        match r {
            Ok(r) => assert!(r.eval_cases.iter().all(|&n| n <= 5)),
            Err(EvaluationError::NoEligibleCases { .. }) => {}
            Err(e) => panic!("{e}"),
        }
        let strict = EvaluationPlan { min_human_solvers: 3, ..EvaluationPlan::default() };
        assert!(matches!(
            evaluate_ensemble(&ds, &spec, &folds, MetricKind::Top1, &strict),
            Err(EvaluationError::NoEligibleCases { .. })
        ));
    }

    #[test]
    fn unweighted_mode_uses_unit_weights() {
        let ds = data(|m, _, i| if m == "a" { 1 } else { i % 6 }, &[]);
        let folds = make_folds(ds.cases.keys(), 5, 3).unwrap();
        let plan = EvaluationPlan { mode: WeightingMode::Unweighted, ..EvaluationPlan::default() };
        let r = evaluate_ensemble(&ds, &"a|b".parse().unwrap(), &folds, MetricKind::Top1, &plan).unwrap();
        for m in &r.models {
            assert!(m.weights.iter().all(|(_, w)| w == 1.0));
        }
        let weighted =
            evaluate_ensemble(&ds, &"a|b".parse().unwrap(), &folds, MetricKind::Top1, &EvaluationPlan::default())
                .unwrap();
        assert!(weighted.models.iter().any(|m| m.weights.iter().any(|(_, w)| w > 1.0)));
    }

    #[test]
    fn parallel_run_keeps_order() {
        let ds = data(|m, p, i| (i + m.len() + p.len()) % 6, &[]);
        let folds = make_folds(ds.cases.keys(), 5, 3).unwrap();
        let specs = crate::evaluation::enumerate_llm_ensembles(&ds.llm_ids()).unwrap();
        let report = run_evaluation(&ds, &specs, &folds, &EvaluationPlan::default()).unwrap();
        assert_eq!(report.results.len(), 3 * 4);
        assert_eq!(report.results[4].spec.to_string(), "b");
        assert_eq!(report.results[5].metric, MetricKind::Top3);
        assert_eq!(report.selected_prompts[&MetricKind::Top1].len(), 5);
        let again = run_evaluation(&ds, &specs, &folds, &EvaluationPlan::default()).unwrap();
        assert_eq!(report, again);
    }
}
