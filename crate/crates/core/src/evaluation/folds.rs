use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::Serialize;

use super::EvaluationError;
use crate::ids::CaseId;
use crate::sampling::{derive_seed, rng_from};

/// A partition of cases into `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FoldAssignment {
    pub k: usize,
    pub seed: u64,
    pub assignment: BTreeMap<CaseId, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, case_id: &CaseId) -> Option<usize> {
        self.assignment.get(case_id).copied()
    }

    /// Cases of each fold, ascending by ID.
    pub fn folds(&self) -> Vec<Vec<CaseId>> {
        let mut out = vec![Vec::new(); self.k];
        for (case, &f) in &self.assignment {
            out[f].push(case.clone());
        }
        out
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.folds().iter().map(Vec::len).collect()
    }
}

fn deal(order: Vec<CaseId>, k: usize, seed: u64) -> FoldAssignment {
    let assignment = order.into_iter().enumerate().map(|(i, c)| (c, i % k)).collect();
    FoldAssignment { k, seed, assignment }
}

fn check(n: usize, k: usize) -> Result<(), EvaluationError> {
    if k == 0 || n < k {
        return Err(EvaluationError::TooFewCases { cases: n, k });
    }
    Ok(())
}

/// Seeded uniform partition; fold sizes differ by at most one.
pub fn make_folds<'a>(
    cases: impl IntoIterator<Item = &'a CaseId>,
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, EvaluationError> {
    let mut order: Vec<CaseId> = cases.into_iter().cloned().collect();
    order.sort();
    order.dedup();
    check(order.len(), k)?;
    order.shuffle(&mut rng_from(derive_seed(seed, &["folds"])));
    Ok(deal(order, k, seed))
}

/// Like [`make_folds`], but every stratum is spread as evenly as possible
/// over the folds.
pub fn make_stratified_folds<'a>(
    cases: impl IntoIterator<Item = (&'a CaseId, Option<&'a str>)>,
    k: usize,
    seed: u64,
) -> Result<FoldAssignment, EvaluationError> {
    let mut strata: BTreeMap<Option<&str>, Vec<CaseId>> = BTreeMap::new();
    for (case, stratum) in cases {
        strata.entry(stratum).or_default().push(case.clone());
    }
    let mut order = Vec::new();
    for (stratum, mut members) in strata {
        members.sort();
        members.dedup();
        let label = stratum.unwrap_or("");
        members.shuffle(&mut rng_from(derive_seed(seed, &["folds", "stratum", label])));
        order.extend(members);
    }
    check(order.len(), k)?;
    Ok(deal(order, k, seed))
}
