use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use super::engine::{run_folds, EvaluationPlan, FoldRun};
use super::{EnsembleSpec, EvaluationError, FoldAssignment};
use crate::ids::{CaseId, DiagnosticianId};
use crate::ingestion::ResolvedDataset;
use crate::ingestion::{Tenure, TenureFilter};
use crate::metrics::{rank_of_correct, MetricKind, RankOutcome, RANK_CUTOFF};
use crate::terminology::ConceptId;

pub const RANK_LABELS: [&str; 6] = ["1", "2", "3", "4", "5", "not_ranked"];

fn cell(outcome: RankOutcome) -> usize {
    outcome.category().map_or(RANK_CUTOFF, |r| r - 1)
}

/// Joint distribution of the correct diagnosis' rank category for two sides.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplementarityMatrix {
    pub rows: String,
    pub columns: String,
    /// Fractions of case mass; `cells[a][b]`, last index is "not ranked".
    pub cells: [[f64; 6]; 6],
}

impl ComplementarityMatrix {
    pub fn total(&self) -> f64 {
        self.cells.iter().flatten().sum()
    }

    pub fn percentages(&self) -> [[f64; 6]; 6] {
        self.cells.map(|row| row.map(|v| v * 100.0))
    }

    pub fn off_diagonal(&self) -> f64 {
        let mut s = 0.0;
        for (i, row) in self.cells.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if i != j {
                    s += v;
                }
            }
        }
        s
    }
}

/// How often both sides put the same concept at ranks `(a, b)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementStats {
    pub overall: [[f64; 5]; 5],
    /// Same, counting only concepts that are wrong for the case.
    pub both_incorrect: [[f64; 5]; 5],
}

impl AgreementStats {
    pub fn at(&self, rank_a: usize, rank_b: usize) -> (f64, f64) {
        (self.overall[rank_a - 1][rank_b - 1], self.both_incorrect[rank_a - 1][rank_b - 1])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairAnalysis {
    pub complementarity: ComplementarityMatrix,
    pub agreement: AgreementStats,
    pub folds_used: usize,
    pub cases: usize,
}

/// One case of one fold, with the differentials each side produced.
pub(crate) struct PairCase<'a> {
    pub correct: &'a BTreeSet<ConceptId>,
    pub a: &'a [Vec<ConceptId>],
    pub b: &'a [Vec<ConceptId>],
}

/// Accumulates the joint tables. Folds weigh equally and so do the cases
/// within a fold; a side with several samples splits its case mass evenly.
/// `paired` matches sample `i` with sample `i` instead of all pairs.
pub(crate) fn accumulate(folds: &[Vec<PairCase<'_>>], paired: bool) -> (ComplementarityMatrix, AgreementStats, usize) {
    let mut cells = [[0.0; 6]; 6];
    let mut overall = [[0.0; 5]; 5];
    let mut both_incorrect = [[0.0; 5]; 5];
    let used: Vec<&Vec<PairCase<'_>>> = folds.iter().filter(|f| !f.is_empty()).collect();
    for fold in &used {
        let fold_mass = 1.0 / (used.len() * fold.len()) as f64;
        for case in fold.iter() {
            let pairs: Vec<(&Vec<ConceptId>, &Vec<ConceptId>)> = if paired {
                case.a.iter().zip(case.b).collect()
            } else {
                case.a.iter().flat_map(|x| case.b.iter().map(move |y| (x, y))).collect()
            };
            if pairs.is_empty() {
                continue;
            }
            let w = fold_mass / pairs.len() as f64;
            for (x, y) in pairs {
                cells[cell(rank_of_correct(x, case.correct))][cell(rank_of_correct(y, case.correct))] += w;
                for (i, cx) in x.iter().take(5).enumerate() {
                    for (j, cy) in y.iter().take(5).enumerate() {
                        if cx == cy {
                            overall[i][j] += w;
                            if !case.correct.contains(cx) {
                                both_incorrect[i][j] += w;
                            }
                        }
                    }
                }
            }
        }
    }
    let matrix = ComplementarityMatrix { rows: String::new(), columns: String::new(), cells };
    (matrix, AgreementStats { overall, both_incorrect }, used.len())
}

fn fold_runs(
    data: &ResolvedDataset,
    a: &EnsembleSpec,
    b: &EnsembleSpec,
    folds: &FoldAssignment,
    metric: MetricKind,
    plan: &EvaluationPlan,
) -> Result<(Vec<FoldRun>, Vec<FoldRun>), EvaluationError> {
    let runs_a = run_folds(data, a, folds, metric, plan)?;
    let runs_b = if a == b { runs_a.clone() } else { run_folds(data, b, folds, metric, plan)? };
    Ok((runs_a, runs_b))
}

/// Complementarity and agreement of two sides over the evaluation folds.
/// Each side is trained on every fold exactly as in [`super::evaluate_ensemble`].
pub fn analyze_pair(
    data: &ResolvedDataset,
    a: &EnsembleSpec,
    b: &EnsembleSpec,
    folds: &FoldAssignment,
    metric: MetricKind,
    plan: &EvaluationPlan,
) -> Result<PairAnalysis, EvaluationError> {
    let (runs_a, runs_b) = fold_runs(data, a, b, folds, metric, plan)?;
    let mut cases = BTreeSet::new();
    let per_fold: Vec<Vec<PairCase<'_>>> = runs_a
        .iter()
        .zip(&runs_b)
        .map(|(ra, rb)| {
            ra.samples
                .iter()
                .filter_map(|(case_id, sa)| {
                    let sb = rb.samples.get(case_id)?;
                    cases.insert(case_id.clone());
                    Some(PairCase { correct: &data.cases[case_id].correct, a: sa, b: sb })
                })
                .collect()
        })
        .collect();
    let (mut complementarity, agreement, folds_used) = accumulate(&per_fold, a == b);
    if folds_used == 0 {
        return Err(EvaluationError::NoOverlappingCases);
    }
    complementarity.rows = a.to_string();
    complementarity.columns = b.to_string();
    Ok(PairAnalysis { complementarity, agreement, folds_used, cases: cases.len() })
}

pub fn complementarity(
    data: &ResolvedDataset,
    a: &EnsembleSpec,
    b: &EnsembleSpec,
    folds: &FoldAssignment,
    metric: MetricKind,
    plan: &EvaluationPlan,
) -> Result<ComplementarityMatrix, EvaluationError> {
    Ok(analyze_pair(data, a, b, folds, metric, plan)?.complementarity)
}

pub fn agreement_stats(
    data: &ResolvedDataset,
    a: &EnsembleSpec,
    b: &EnsembleSpec,
    folds: &FoldAssignment,
    metric: MetricKind,
    plan: &EvaluationPlan,
) -> Result<AgreementStats, EvaluationError> {
    Ok(analyze_pair(data, a, b, folds, metric, plan)?.agreement)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhysicianVerdict {
    pub physician: DiagnosticianId,
    pub tenure: Tenure,
    pub cases: usize,
    /// Cases where the LLM side ranked the correct diagnosis higher. A case
    /// evaluated on several folds contributes the fraction of those folds.
    pub llm_wins: f64,
    pub physician_wins: f64,
    pub ties: f64,
    pub llm_win_pct: f64,
    pub outperformed: bool,
    pub outperformed_or_tied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutperformanceReport {
    pub side: EnsembleSpec,
    pub metric: MetricKind,
    pub min_cases: usize,
    pub physicians: Vec<PhysicianVerdict>,
    /// Humans left out for having fewer than `min_cases` cases.
    pub excluded: usize,
    pub pct_outperformed: f64,
    pub pct_outperformed_or_tied: f64,
}

/// Lower is better; anything beyond the cutoff or absent ties for worst.
fn standing(outcome: RankOutcome) -> usize {
    outcome.category().unwrap_or(RANK_CUTOFF + 1)
}

/// Head-to-head of an LLM side against every admitted human.
pub fn outperformance(
    data: &ResolvedDataset,
    side: &EnsembleSpec,
    folds: &FoldAssignment,
    metric: MetricKind,
    plan: &EvaluationPlan,
    min_cases: usize,
    who: TenureFilter,
) -> Result<OutperformanceReport, EvaluationError> {
    if side.n_humans > 0 || side.llms.is_empty() {
        return Err(EvaluationError::BadSpec(side.to_string()));
    }
    let runs = run_folds(data, side, folds, metric, plan)?;
    // case -> LLM outcome on each fold that evaluated it
    let mut llm: BTreeMap<&CaseId, Vec<RankOutcome>> = BTreeMap::new();
    for run in &runs {
        for (case_id, samples) in &run.samples {
            llm.entry(case_id).or_default().push(rank_of_correct(&samples[0], &data.cases[case_id].correct));
        }
    }

    let mut physicians = Vec::new();
    let mut excluded = 0;
    for d in data.diagnosticians.values() {
        let Some(tenure) = d.tenure() else { continue };
        if !who.admits(tenure) {
            continue;
        }
        let (mut wins, mut losses, mut ties, mut cases) = (0.0, 0.0, 0.0, 0usize);
        for (case_id, outcomes) in &llm {
            let case = &data.cases[*case_id];
            let Some(list) = case.humans.get(&d.diagnostician_id) else { continue };
            let human = standing(rank_of_correct(list, &case.correct));
            let share = 1.0 / outcomes.len() as f64;
            for &o in outcomes {
                match standing(o).cmp(&human) {
                    std::cmp::Ordering::Less => wins += share,
                    std::cmp::Ordering::Greater => losses += share,
                    std::cmp::Ordering::Equal => ties += share,
                }
            }
            cases += 1;
        }
        if cases < min_cases.max(1) {
            excluded += 1;
            continue;
        }
        physicians.push(PhysicianVerdict {
            physician: d.diagnostician_id.clone(),
            tenure,
            cases,
            llm_wins: wins,
            physician_wins: losses,
            ties,
            llm_win_pct: 100.0 * wins / cases as f64,
            outperformed: wins > losses,
            outperformed_or_tied: wins >= losses,
        });
    }
    let pct = |f: fn(&PhysicianVerdict) -> bool| {
        if physicians.is_empty() {
            0.0
        } else {
            100.0 * physicians.iter().filter(|p| f(p)).count() as f64 / physicians.len() as f64
        }
    };
    Ok(OutperformanceReport {
        side: side.clone(),
        metric,
        min_cases,
        pct_outperformed: pct(|p| p.outperformed),
        pct_outperformed_or_tied: pct(|p| p.outperformed_or_tied),
        physicians,
        excluded,
    })
}
