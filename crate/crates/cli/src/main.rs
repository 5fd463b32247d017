//! `cdx`: dataset validation, match auditing, weight learning,
//! cross-validated evaluation, pairwise analytics and fixture synthesis.

mod config;

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use collective_dx::aggregation::{aggregate, MemberInput, MemberKey, ScoredConcept};
use collective_dx::evaluation::{
    analyze_pair, enumerate_llm_ensembles, make_folds, make_stratified_folds, outperformance, report, run_evaluation,
    select_prompt, EnsembleSpec, EvaluationPlan, EvaluationReport, FoldAssignment, WeightingMode,
};
use collective_dx::ids::{CaseId, DiagnosticianId};
use collective_dx::ingestion::{Dataset, PostprocessRules, ResolutionLog, ResolvedDataset, TenureFilter};
use collective_dx::metrics::MetricKind;
use collective_dx::sampling::derive_seed;
use collective_dx::synth::{Profile, SynthConfig, SyntheticData};
use collective_dx::terminology::{
    ConceptId, EmbeddingTable, MatchMethod, Matcher, NormalizationRules, Terminology, TerminologyIndex,
};
use collective_dx::wmve::{learn_weights, GroupSamplingConfig, TrainingEnsemble, WeightsFile};
use config::{Mode, Paths, RunConfig};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "cdx", version, about = "Collective differential diagnosis toolkit")]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, env = "DXC_CONFIG")]
    config: Option<PathBuf>,
    /// Directory holding terminology.tsv, embeddings.tsv and the dataset files.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Keep only cases of this specialty.
    #[arg(long, global = true)]
    specialty: Option<String>,
    /// Keep only humans of this tenure (physician, student, attending, fellow, resident).
    #[arg(long, global = true)]
    tenure: Option<TenureFilter>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and cross-check the dataset files.
    Validate,
    /// Resolve every distinct response string and log how it matched.
    MatchAudit,
    /// Learn weights for one ensemble on all cases or on one fold.
    LearnWeights {
        #[arg(long)]
        ensemble: String,
        #[arg(long, default_value = "mrr")]
        metric: MetricKind,
        /// Train on this fold only.
        #[arg(long)]
        fold: Option<usize>,
    },
    /// Collective differentials for every case under a learned weights file.
    Aggregate {
        #[arg(long)]
        weights: PathBuf,
        /// Output file; defaults to `collective.jsonl` in the output directory.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Cross-validated metrics for LLM, human and hybrid ensembles.
    Evaluate {
        /// Ensemble specs; defaults to every LLM subset plus human and hybrid ensembles.
        #[arg(long = "ensemble")]
        ensembles: Vec<String>,
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long = "metric")]
        metrics: Vec<MetricKind>,
        /// Fit every metric's prompts and weights with this one metric.
        #[arg(long)]
        fit_metric: Option<MetricKind>,
    },
    /// Joint rank-category matrices and agreement for pairs of ensembles.
    Complementarity {
        #[arg(long, requires = "b")]
        a: Option<String>,
        #[arg(long, requires = "a")]
        b: Option<String>,
        #[arg(long)]
        metric: Option<MetricKind>,
    },
    /// Head-to-head counts of LLM sides against individual humans.
    Outperformance {
        #[arg(long = "side")]
        sides: Vec<String>,
        #[arg(long)]
        min_cases: Option<usize>,
        #[arg(long)]
        metric: Option<MetricKind>,
        /// Which humans to compare against.
        #[arg(long, default_value = "physician")]
        against: TenureFilter,
    },
    /// Write a synthetic dataset and a matching config.
    Synthesize(SynthArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 60)]
    cases: usize,
    #[arg(long, default_value_t = 12)]
    humans: usize,
    #[arg(long, default_value_t = 5)]
    solvers: usize,
    #[arg(long, default_value_t = 3)]
    llms: usize,
    #[arg(long, default_value_t = 2)]
    prompts: usize,
    #[arg(long, default_value_t = 80)]
    distractors: usize,
    #[arg(long, default_value = "independent")]
    profile: String,
    #[arg(long, default_value_t = 0.5)]
    accuracy: f64,
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    #[arg(long, default_value_t = 0.6)]
    human_share: f64,
    #[arg(long, default_value_t = 0.6)]
    llm_share: f64,
    #[arg(long, default_value_t = 0.0)]
    garble: f64,
    #[arg(long, default_value_t = 256)]
    dim: usize,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global().context("starting worker pool")?;
    }
    match &cli.command {
        Command::Synthesize(args) => synthesize(&cli, args),
        command => {
            let cfg = settings(&cli)?;
            match command {
                Command::Validate => validate(&cfg),
                Command::MatchAudit => match_audit(&cfg),
                Command::LearnWeights { ensemble, metric, fold } => learn(&cfg, ensemble, *metric, *fold),
                Command::Aggregate { weights, output } => aggregate_cmd(&cfg, weights, output.as_deref()),
                Command::Evaluate { ensembles, mode, folds, metrics, fit_metric } => {
                    let mut cfg = cfg;
                    if fit_metric.is_some() {
                        cfg.fit_metric = *fit_metric;
                    }
                    if let Some(m) = mode {
                        cfg.mode = *m;
                    }
                    if let Some(k) = folds {
                        cfg.k_folds = *k;
                    }
                    if !metrics.is_empty() {
                        cfg.metrics = metrics.clone();
                    }
                    evaluate(&cfg, ensembles)
                }
                Command::Complementarity { a, b, metric } => {
                    let pairs = match (a, b) {
                        (Some(a), Some(b)) => vec![[a.clone(), b.clone()]],
                        _ => cfg.pairs.clone(),
                    };
                    complementarity(&cfg, pairs, metric.unwrap_or(cfg.analysis_metric))
                }
                Command::Outperformance { sides, min_cases, metric, against } => outperform(
                    &cfg,
                    sides,
                    min_cases.unwrap_or(cfg.min_cases_outperformance),
                    metric.unwrap_or(cfg.analysis_metric),
                    *against,
                ),
                Command::Synthesize(_) => unreachable!(),
            }
        }
    }
}

/// Config file, then flags.
fn settings(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = &cli.data_dir {
        cfg.paths = Paths { rules: cfg.paths.rules.take(), ..Paths::in_dir(dir) };
    }
    if let Some(out) = &cli.out {
        cfg.output = out.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if cli.specialty.is_some() {
        cfg.filters.specialty = cli.specialty.clone();
    }
    if cli.tenure.is_some() {
        cfg.filters.tenure = cli.tenure;
    }
    cfg.validate()?;
    cfg.paths.check_exist()?;
    Ok(cfg)
}

fn write(dir: &Path, name: &str, content: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let (dataset, _) = Dataset::load(&cfg.paths.dataset()?, &PostprocessRules::default())?;
    Ok(dataset)
}

fn load_terminology(cfg: &RunConfig) -> Result<Terminology> {
    let path = cfg.paths.terminology.as_ref().context("no terminology path configured")?;
    Ok(Terminology::load(path)?)
}

fn load_matcher(cfg: &RunConfig, terminology: &Terminology) -> Result<Matcher> {
    let rules = match &cfg.paths.rules {
        Some(dir) => NormalizationRules::from_dir(dir)?,
        None => NormalizationRules::default(),
    };
    let index = TerminologyIndex::build(terminology, rules);
    let Some(path) = &cfg.paths.embeddings else { return Ok(Matcher::exact_only(index)) };
    let (mut table, mut queries) = EmbeddingTable::load(path)?;
    if let Some(extra) = &cfg.paths.queries {
        let (more_rows, more_queries) = EmbeddingTable::load(extra)?;
        if !more_rows.is_empty() {
            bail!("{} holds concept rows; only query rows are allowed there", extra.display());
        }
        queries.extend(more_queries)?;
    }
    table.retain_concepts(|id| terminology.get(id).is_some_and(|c| c.active));
    Ok(Matcher::with_embeddings(index, table, Box::new(queries)))
}

fn resolved(cfg: &RunConfig) -> Result<(ResolvedDataset, ResolutionLog)> {
    let dataset = load_dataset(cfg)?;
    let terminology = load_terminology(cfg)?;
    dataset.check_concepts(&terminology)?;
    let matcher = load_matcher(cfg, &terminology)?;
    let dataset = dataset.filtered(&cfg.filters);
    let (data, log) = ResolvedDataset::resolve(&dataset, &matcher);
    let (exact, embedding, failed) = log.method_counts();
    eprintln!(
        "resolved {} distinct strings: {exact} exact, {embedding} embedding, {failed} unresolved; {} responses rejected",
        log.strings.len(),
        log.rejected.len()
    );
    Ok((data, log))
}

fn folds_for(cfg: &RunConfig, data: &ResolvedDataset) -> Result<FoldAssignment> {
    let folds = if cfg.stratify {
        make_stratified_folds(
            data.cases.iter().map(|(id, c)| (id, c.specialty.as_deref())),
            cfg.k_folds,
            cfg.master_seed,
        )?
    } else {
        make_folds(data.cases.keys(), cfg.k_folds, cfg.master_seed)?
    };
    Ok(folds)
}

fn plan_for(cfg: &RunConfig, mode: WeightingMode) -> EvaluationPlan {
    EvaluationPlan {
        seed: cfg.master_seed,
        metrics: cfg.metrics.clone(),
        max_groups: cfg.max_groups,
        min_human_solvers: cfg.min_human_solvers,
        mode,
        fit_metric: cfg.fit_metric,
    }
}

fn validate(cfg: &RunConfig) -> Result<()> {
    let (dataset, summary) = Dataset::load(&cfg.paths.dataset()?, &PostprocessRules::default())?;
    if cfg.paths.terminology.is_some() {
        let terminology = load_terminology(cfg)?;
        dataset.check_concepts(&terminology)?;
        println!("terminology: {} concepts, {} names", terminology.len(), terminology.entry_count());
    }
    println!("cases: {}", summary.cases);
    println!("humans: {}", summary.humans);
    println!("llms: {}", summary.llms);
    println!("responses: {}", summary.responses);
    println!("raw transcripts: {}", summary.raw_transcripts);
    println!("no answer: {}", summary.no_answer);
    println!("ok");
    Ok(())
}

#[derive(Serialize)]
struct AuditSummary {
    strings: usize,
    exact: usize,
    embedding: usize,
    failed: usize,
    exact_rate: f64,
    dual_method_compared: usize,
    dual_method_agreed: usize,
    dual_method_agreement: Option<f64>,
}

fn match_audit(cfg: &RunConfig) -> Result<()> {
    let dataset = load_dataset(cfg)?;
    let terminology = load_terminology(cfg)?;
    let matcher = load_matcher(cfg, &terminology)?;
    let strings: BTreeSet<&str> =
        dataset.responses.values().flat_map(|r| r.entries.iter().map(String::as_str)).collect();

    let mut rows =
        vec![["text", "method", "concept_id", "name", "similarity", "embedding_concept_id", "embedding_similarity"]
            .iter()
            .map(|s| s.to_string())
            .collect::<Vec<_>>()];
    let (mut exact, mut embedding, mut failed) = (0, 0, 0);
    for text in &strings {
        let resolved = matcher.resolve(text);
        let emb = if matcher.has_fallback() { matcher.match_embedding(text).ok() } else { None };
        let mut row = vec![text.to_string()];
        match &resolved {
            Ok(m) => {
                match m.method {
                    MatchMethod::Exact => exact += 1,
                    MatchMethod::Embedding => embedding += 1,
                }
                let name = terminology.get(m.concept_id).map(|c| c.fully_specified_name.clone()).unwrap_or_default();
                let method = if m.method == MatchMethod::Exact { "exact" } else { "embedding" };
                row.extend([
                    method.to_string(),
                    m.concept_id.to_string(),
                    name,
                    m.similarity.map(report::fmt6).unwrap_or_default(),
                ]);
            }
            Err(_) => {
                failed += 1;
                row.extend(["none".to_string(), String::new(), String::new(), String::new()]);
            }
        }
        row.push(emb.as_ref().map(|m| m.concept_id.to_string()).unwrap_or_default());
        row.push(emb.and_then(|m| m.similarity).map(report::fmt6).unwrap_or_default());
        rows.push(row);
    }
    let agreement = if matcher.has_fallback() { Some(matcher.agreement(strings.iter().copied())?) } else { None };
    let summary = AuditSummary {
        strings: strings.len(),
        exact,
        embedding,
        failed,
        exact_rate: if strings.is_empty() { 0.0 } else { exact as f64 / strings.len() as f64 },
        dual_method_compared: agreement.as_ref().map_or(0, |a| a.compared),
        dual_method_agreed: agreement.as_ref().map_or(0, |a| a.agreed),
        dual_method_agreement: agreement.as_ref().and_then(|a| a.rate()),
    };
    write(&cfg.output, "match_audit.csv", &report::csv_string(rows))?;
    write(&cfg.output, "match_summary.json", &(serde_json::to_string_pretty(&summary)? + "\n"))?;
    println!("strings: {}", summary.strings);
    println!("exact: {} ({:.1}%)", exact, 100.0 * summary.exact_rate);
    println!("embedding: {embedding}");
    println!("unresolved: {failed}");
    if let Some(rate) = summary.dual_method_agreement {
        println!("dual-method agreement: {:.1}% of {}", 100.0 * rate, summary.dual_method_compared);
    }
    Ok(())
}

fn learn(cfg: &RunConfig, ensemble: &str, metric: MetricKind, fold: Option<usize>) -> Result<()> {
    let spec: EnsembleSpec = ensemble.parse()?;
    let (data, _) = resolved(cfg)?;
    let training: Vec<CaseId> = match fold {
        Some(f) => {
            let folds = folds_for(cfg, &data)?;
            folds.folds().get(f).cloned().with_context(|| format!("fold {f} out of range 0..{}", folds.k))?
        }
        None => data.cases.keys().cloned().collect(),
    };
    let mut llms = Vec::new();
    for model in &spec.llms {
        llms.push((model.clone(), select_prompt(&data, model, &training, metric)?));
    }
    let plan = plan_for(cfg, WeightingMode::Weighted);
    let weight_cases: Vec<CaseId> =
        training.iter().filter(|c| data.cases.get(*c).is_some_and(|case| plan.admits(&spec, case))).cloned().collect();
    let sampling = GroupSamplingConfig { max_groups: cfg.max_groups, rng_seed: cfg.master_seed };
    let learned =
        learn_weights(&data, &weight_cases, &TrainingEnsemble { llms, n_humans: spec.n_humans }, metric, &sampling)?;
    let file = WeightsFile { ensemble_id: spec.to_string(), metric, weights: learned.weights, seed: cfg.master_seed };
    let text = serde_json::to_string_pretty(&file)? + "\n";
    let path = write(&cfg.output, "weights.json", &text)?;
    print!("{text}");
    eprintln!(
        "{} training cases, {} with a full human group; wrote {}",
        learned.training_cases,
        learned.human_cases,
        path.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct CollectiveLine<'a> {
    case_id: &'a CaseId,
    humans: Vec<&'a DiagnosticianId>,
    ranking: &'a [ScoredConcept],
}

fn aggregate_cmd(cfg: &RunConfig, weights_path: &Path, output: Option<&Path>) -> Result<()> {
    let text = fs::read_to_string(weights_path).with_context(|| format!("reading {}", weights_path.display()))?;
    let file: WeightsFile =
        serde_json::from_str(&text).with_context(|| format!("parsing {}", weights_path.display()))?;
    let spec: EnsembleSpec = file.ensemble_id.parse()?;
    let mut llms = Vec::new();
    for m in &spec.llms {
        let key = file.weights.iter().map(|(k, _)| k).find(|k| matches!(k, MemberKey::Llm { model, .. } if model == m));
        match key {
            Some(MemberKey::Llm { prompt, .. }) => llms.push((m.clone(), prompt.clone())),
            _ => bail!("weights file has no entry for {m}"),
        }
    }
    let (data, _) = resolved(cfg)?;
    let sampling =
        GroupSamplingConfig { max_groups: 1, rng_seed: derive_seed(file.seed, &["aggregate", &file.ensemble_id]) };
    let mut out = String::new();
    let mut skipped = 0usize;
    for (case_id, case) in &data.cases {
        let mut inputs = Vec::new();
        for (m, prompt) in &llms {
            if let Some(entries) = case.llm(m, prompt) {
                inputs.push(MemberInput { member: MemberKey::llm(m, prompt), case_id, entries });
            }
        }
        let solvers: Vec<(&DiagnosticianId, &Vec<ConceptId>)> = case.humans.iter().collect();
        let groups = if spec.n_humans == 0 {
            vec![Vec::new()]
        } else {
            sampling.groups_for(case_id, solvers.len(), spec.n_humans)
        };
        if inputs.len() < llms.len() || groups.is_empty() {
            skipped += 1;
            continue;
        }
        let group = &groups[0];
        inputs.extend(group.iter().map(|&i| MemberInput { member: MemberKey::Human, case_id, entries: solvers[i].1 }));
        let collective = aggregate(&inputs, &file.weights)?;
        let line = CollectiveLine {
            case_id,
            humans: group.iter().map(|&i| solvers[i].0).collect(),
            ranking: &collective.ranking,
        };
        out.push_str(&serde_json::to_string(&line)?);
        out.push('\n');
    }
    let path = match output {
        Some(p) => {
            fs::write(p, &out).with_context(|| format!("writing {}", p.display()))?;
            p.to_path_buf()
        }
        None => write(&cfg.output, "collective.jsonl", &out)?,
    };
    eprintln!("{} cases written to {}, {skipped} skipped for missing members", out.lines().count(), path.display());
    Ok(())
}

/// Default ensembles: every LLM subset, then human-only and hybrid ensembles
/// for each configured human count.
fn default_specs(cfg: &RunConfig, data: &ResolvedDataset) -> Result<Vec<EnsembleSpec>> {
    let llms = data.llm_ids();
    let mut specs = if llms.is_empty() { Vec::new() } else { enumerate_llm_ensembles(&llms)? };
    let max_solvers = data.cases.values().map(|c| c.solver_count()).max().unwrap_or(0);
    for &n in cfg.human_counts.iter().filter(|&&n| n > 0 && n <= max_solvers) {
        specs.push(EnsembleSpec::humans(n));
        for m in &llms {
            specs.push(EnsembleSpec::llm(m.as_str()).with_humans(n));
        }
        if llms.len() > 1 {
            specs.push(EnsembleSpec::new(llms.clone(), n)?);
        }
    }
    Ok(specs)
}

/// Whether every fold has cases to train and evaluate `spec` on.
fn feasible(spec: &EnsembleSpec, data: &ResolvedDataset, folds: &FoldAssignment, plan: &EvaluationPlan) -> bool {
    let mut train = vec![0usize; folds.k];
    for (id, case) in &data.cases {
        if let (Some(f), true) = (folds.fold_of(id), plan.admits(spec, case)) {
            train[f] += 1;
        }
    }
    let total: usize = train.iter().sum();
    train.iter().all(|&n| n > 0 && n < total)
}

fn evaluate(cfg: &RunConfig, explicit: &[String]) -> Result<()> {
    let (data, _) = resolved(cfg)?;
    let folds = folds_for(cfg, &data)?;
    let specs = if explicit.is_empty() {
        default_specs(cfg, &data)?
    } else {
        explicit.iter().map(|s| s.parse()).collect::<Result<Vec<EnsembleSpec>, _>>()?
    };
    let probe = plan_for(cfg, WeightingMode::Weighted);
    let (specs, skipped): (Vec<EnsembleSpec>, Vec<EnsembleSpec>) =
        specs.into_iter().partition(|s| feasible(s, &data, &folds, &probe));
    for s in &skipped {
        eprintln!("skipping {s}: some fold has no case with enough human solvers");
    }
    if specs.is_empty() {
        bail!("nothing to evaluate");
    }

    let mut reports: Vec<EvaluationReport> = Vec::new();
    for mode in cfg.mode.runs() {
        reports.push(run_evaluation(&data, &specs, &folds, &plan_for(cfg, mode))?);
    }
    for r in &reports {
        let suffix =
            if r.plan.mode == WeightingMode::Unweighted && cfg.mode == Mode::Both { "_unweighted" } else { "" };
        write(&cfg.output, &format!("table{suffix}.csv"), &report::table_csv(r))?;
        write(&cfg.output, &format!("folds{suffix}.json"), &report::sidecar_json(r))?;
    }
    if let [weighted, unweighted] = reports.as_slice() {
        write(&cfg.output, "weighting_comparison.csv", &report::weighting_comparison_csv(weighted, unweighted))?;
    }
    print!("{}", report::table_csv(&reports[0]));
    Ok(())
}

#[derive(Serialize)]
struct PairSummary {
    a: String,
    b: String,
    metric: MetricKind,
    cases: usize,
    folds_used: usize,
    raw_total: f64,
    diagonal: f64,
    files: [String; 2],
}

fn complementarity(cfg: &RunConfig, mut pairs: Vec<[String; 2]>, metric: MetricKind) -> Result<()> {
    let (data, _) = resolved(cfg)?;
    let folds = folds_for(cfg, &data)?;
    if pairs.is_empty() {
        // each LLM, and all of them together, against individual humans
        let llms = data.llm_ids();
        pairs.extend(llms.iter().map(|m| [m.to_string(), "humans:1".into()]));
        if llms.len() > 1 {
            pairs.push([EnsembleSpec::new(llms, 0)?.to_string(), "humans:1".into()]);
        }
    }
    let plan = EvaluationPlan { metrics: vec![metric], ..plan_for(cfg, mode_of(cfg)) };
    let mut summaries = Vec::new();
    for (i, [a, b]) in pairs.iter().enumerate() {
        let (a, b): (EnsembleSpec, EnsembleSpec) = (a.parse()?, b.parse()?);
        let analysis =
            analyze_pair(&data, &a, &b, &folds, metric, &plan).with_context(|| format!("pair {a} vs {b}"))?;
        let names = [format!("pair{:02}_complementarity.csv", i + 1), format!("pair{:02}_agreement.csv", i + 1)];
        write(&cfg.output, &names[0], &report::complementarity_csv(&analysis.complementarity))?;
        write(&cfg.output, &names[1], &report::agreement_csv(&analysis.agreement))?;
        let m = &analysis.complementarity;
        summaries.push(PairSummary {
            a: a.to_string(),
            b: b.to_string(),
            metric,
            cases: analysis.cases,
            folds_used: analysis.folds_used,
            raw_total: m.total(),
            diagonal: m.total() - m.off_diagonal(),
            files: names,
        });
        println!(
            "{a} vs {b}: {} cases, rank-1 agreement {}%",
            analysis.cases,
            report::fmt6(100.0 * analysis.agreement.at(1, 1).0)
        );
    }
    write(&cfg.output, "pairs.json", &(serde_json::to_string_pretty(&summaries)? + "\n"))?;
    Ok(())
}

fn mode_of(cfg: &RunConfig) -> WeightingMode {
    match cfg.mode {
        Mode::Unweighted => WeightingMode::Unweighted,
        Mode::Weighted | Mode::Both => WeightingMode::Weighted,
    }
}

#[derive(Serialize)]
struct OutperformanceSummary {
    side: String,
    metric: MetricKind,
    physicians: usize,
    excluded: usize,
    pct_outperformed: f64,
    pct_outperformed_or_tied: f64,
    file: String,
}

fn outperform(
    cfg: &RunConfig,
    sides: &[String],
    min_cases: usize,
    metric: MetricKind,
    against: TenureFilter,
) -> Result<()> {
    let (data, _) = resolved(cfg)?;
    let folds = folds_for(cfg, &data)?;
    let sides: Vec<EnsembleSpec> = if sides.is_empty() {
        let llms = data.llm_ids();
        let mut s: Vec<EnsembleSpec> = llms.iter().map(|m| EnsembleSpec::llm(m.as_str())).collect();
        if llms.len() > 1 {
            s.push(EnsembleSpec::new(llms, 0)?);
        }
        s
    } else {
        sides.iter().map(|s| s.parse()).collect::<Result<_, _>>()?
    };
    let plan = EvaluationPlan { metrics: vec![metric], ..plan_for(cfg, mode_of(cfg)) };
    let mut summaries = Vec::new();
    for (i, side) in sides.iter().enumerate() {
        let r = outperformance(&data, side, &folds, metric, &plan, min_cases, against)?;
        let file = format!("outperformance{:02}.csv", i + 1);
        write(&cfg.output, &file, &report::outperformance_csv(&r))?;
        println!(
            "{side}: outperformed {}% of {} humans, outperformed or tied {}%",
            report::fmt6(r.pct_outperformed),
            r.physicians.len(),
            report::fmt6(r.pct_outperformed_or_tied)
        );
        summaries.push(OutperformanceSummary {
            side: side.to_string(),
            metric,
            physicians: r.physicians.len(),
            excluded: r.excluded,
            pct_outperformed: r.pct_outperformed,
            pct_outperformed_or_tied: r.pct_outperformed_or_tied,
            file,
        });
    }
    write(&cfg.output, "outperformance.json", &(serde_json::to_string_pretty(&summaries)? + "\n"))?;
    Ok(())
}

fn synthesize(cli: &Cli, a: &SynthArgs) -> Result<()> {
    if a.cases == 0 || a.humans == 0 || a.llms == 0 || a.prompts == 0 || a.dim == 0 {
        bail!("sizes must be positive");
    }
    if a.solvers > a.humans {
        bail!("--solvers ({}) exceeds --humans ({})", a.solvers, a.humans);
    }
    let profile = match a.profile.as_str() {
        "independent" => Profile::Independent { accuracy: a.accuracy },
        "correlated" => Profile::Correlated { accuracy: a.accuracy, rho: a.rho },
        "complementary" => Profile::Complementary { human_share: a.human_share, llm_share: a.llm_share },
        other => bail!("unknown profile {other:?} (independent, correlated, complementary)"),
    };
    for (name, p) in [
        ("accuracy", a.accuracy),
        ("rho", a.rho),
        ("garble", a.garble),
        ("human-share", a.human_share),
        ("llm-share", a.llm_share),
    ] {
        if !(0.0..=1.0).contains(&p) {
            bail!("--{name} must lie in [0, 1]");
        }
    }
    let seed = cli.seed.unwrap_or(1);
    let synth = SynthConfig {
        seed,
        cases: a.cases,
        humans: a.humans,
        solvers_per_case: a.solvers,
        llms: a.llms,
        prompts: a.prompts,
        distractors: a.distractors,
        profile,
        garble_rate: a.garble,
        embedding_dim: a.dim,
    };
    let dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("synthetic"));
    let data = SyntheticData::generate(&synth);
    data.write(&dir).with_context(|| format!("writing into {}", dir.display()))?;
    let cfg = RunConfig {
        master_seed: seed,
        output: PathBuf::from("results"),
        paths: Paths {
            terminology: Some("terminology.tsv".into()),
            embeddings: Some("embeddings.tsv".into()),
            cases: Some("cases.jsonl".into()),
            diagnosticians: Some("diagnosticians.jsonl".into()),
            responses: Some("responses.jsonl".into()),
            ..Paths::default()
        },
        ..RunConfig::default()
    };
    write(&dir, "config.toml", &cfg.to_toml()?)?;
    println!(
        "wrote {} cases, {} humans, {} LLMs x {} prompts, {} concepts to {}",
        data.cases.len(),
        a.humans,
        a.llms,
        a.prompts,
        data.terminology.len(),
        dir.display()
    );
    Ok(())
}
