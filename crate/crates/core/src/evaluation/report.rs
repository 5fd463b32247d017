//! Plain-text renderings of evaluation outputs: CSV tables and a JSON
//! sidecar with the per-fold details.

use std::collections::BTreeMap;

use serde::Serialize;

use super::analytics::{AgreementStats, ComplementarityMatrix, OutperformanceReport, RANK_LABELS};
use super::engine::{EvaluationReport, FoldModel};
use crate::metrics::MetricKind;

/// Six significant digits, positional notation, trailing zeros trimmed.
pub fn fmt6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".into() } else { x.to_string() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    let decimals = (5 - exp).max(0) as usize;
    let rounded: f64 = format!("{mantissa}e{exp}").parse().expect("round trip");
    let mut s = format!("{rounded:.decimals$}");
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}

/// Renders rows as comma-separated text with standard quoting.
pub fn csv_string(rows: Vec<Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 input")
}

/// One row per ensemble: `combo,top1,top3,top5,mrr`. Metrics that were not
/// evaluated are left empty.
pub fn table_csv(report: &EvaluationReport) -> String {
    let mut rows = vec![std::iter::once("combo".to_string())
        .chain(MetricKind::ALL.iter().map(|m| m.name().to_string()))
        .collect()];
    let mut seen = Vec::new();
    for r in &report.results {
        if !seen.contains(&&r.spec) {
            seen.push(&r.spec);
        }
    }
    for spec in seen {
        let mut row = vec![spec.to_string()];
        for m in MetricKind::ALL {
            row.push(report.result(spec, m).map(|r| fmt6(r.mean)).unwrap_or_default());
        }
        rows.push(row);
    }
    csv_string(rows)
}

#[derive(Serialize)]
struct FoldBlock<'a> {
    values: &'a [f64],
    eval_cases: &'a [usize],
    seeds: &'a [u64],
    models: &'a [FoldModel],
}

#[derive(Serialize)]
struct Sidecar<'a> {
    seed: u64,
    k: usize,
    mode: &'a super::WeightingMode,
    max_groups: usize,
    min_human_solvers: usize,
    fit_metric: Option<MetricKind>,
    folds: &'a BTreeMap<crate::ids::CaseId, usize>,
    selected_prompts:
        BTreeMap<&'static str, &'a Vec<BTreeMap<crate::ids::DiagnosticianId, Option<crate::ids::PromptId>>>>,
    results: BTreeMap<String, BTreeMap<&'static str, FoldBlock<'a>>>,
}

/// Per-fold values, chosen prompts, weights and seeds.
pub fn sidecar_json(report: &EvaluationReport) -> String {
    let mut results: BTreeMap<String, BTreeMap<&'static str, FoldBlock<'_>>> = BTreeMap::new();
    for r in &report.results {
        results.entry(r.spec.to_string()).or_default().insert(
            r.metric.name(),
            FoldBlock { values: &r.fold_values, eval_cases: &r.eval_cases, seeds: &r.seeds, models: &r.models },
        );
    }
    let sidecar = Sidecar {
        seed: report.plan.seed,
        k: report.folds.k,
        mode: &report.plan.mode,
        max_groups: report.plan.max_groups,
        min_human_solvers: report.plan.min_human_solvers,
        fit_metric: report.plan.fit_metric,
        folds: &report.folds.assignment,
        selected_prompts: report.selected_prompts.iter().map(|(m, v)| (m.name(), v)).collect(),
        results,
    };
    let mut s = serde_json::to_string_pretty(&sidecar).expect("report serializes");
    s.push('\n');
    s
}

/// Weighted against unweighted means for every shared (ensemble, metric).
pub fn weighting_comparison_csv(weighted: &EvaluationReport, unweighted: &EvaluationReport) -> String {
    let mut rows =
        vec![vec!["combo".into(), "metric".into(), "weighted".into(), "unweighted".into(), "difference".into()]];
    for r in &weighted.results {
        if let Some(u) = unweighted.result(&r.spec, r.metric) {
            rows.push(vec![
                r.spec.to_string(),
                r.metric.name().into(),
                fmt6(r.mean),
                fmt6(u.mean),
                fmt6(r.mean - u.mean),
            ]);
        }
    }
    csv_string(rows)
}

/// Percentages with labeled axes; rows belong to the first side.
pub fn complementarity_csv(m: &ComplementarityMatrix) -> String {
    let mut rows = vec![std::iter::once(format!("{} \\ {}", m.rows, m.columns))
        .chain(RANK_LABELS.iter().map(|s| s.to_string()))
        .collect()];
    for (label, row) in RANK_LABELS.iter().zip(m.percentages()) {
        rows.push(std::iter::once(label.to_string()).chain(row.iter().map(|&v| fmt6(v))).collect());
    }
    csv_string(rows)
}

pub fn agreement_csv(a: &AgreementStats) -> String {
    let mut rows = vec![vec!["rank_a".into(), "rank_b".into(), "overall_pct".into(), "both_incorrect_pct".into()]];
    for i in 1..=5 {
        for j in 1..=5 {
            let (all, wrong) = a.at(i, j);
            rows.push(vec![i.to_string(), j.to_string(), fmt6(100.0 * all), fmt6(100.0 * wrong)]);
        }
    }
    csv_string(rows)
}

pub fn outperformance_csv(r: &OutperformanceReport) -> String {
    let mut rows = vec![[
        "physician",
        "tenure",
        "cases",
        "llm_wins",
        "physician_wins",
        "ties",
        "llm_win_pct",
        "outperformed",
        "outperformed_or_tied",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()];
    for p in &r.physicians {
        let tenure =
            serde_json::to_value(p.tenure).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default();
        rows.push(vec![
            p.physician.to_string(),
            tenure,
            p.cases.to_string(),
            fmt6(p.llm_wins),
            fmt6(p.physician_wins),
            fmt6(p.ties),
            fmt6(p.llm_win_pct),
            p.outperformed.to_string(),
            p.outperformed_or_tied.to_string(),
        ]);
    }
    csv_string(rows)
}
