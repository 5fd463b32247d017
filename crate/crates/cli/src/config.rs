//! Run configuration: a TOML file whose paths are relative to the file.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use collective_dx::evaluation::WeightingMode;
use collective_dx::ingestion::{DatasetFilter, DatasetPaths};
use collective_dx::metrics::MetricKind;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Weighted,
    Unweighted,
    Both,
}

impl Mode {
    pub fn runs(self) -> Vec<WeightingMode> {
        match self {
            Mode::Weighted => vec![WeightingMode::Weighted],
            Mode::Unweighted => vec![WeightingMode::Unweighted],
            Mode::Both => vec![WeightingMode::Weighted, WeightingMode::Unweighted],
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub terminology: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// Extra query vectors, same format as `embeddings`.
    pub queries: Option<PathBuf>,
    pub cases: Option<PathBuf>,
    pub diagnosticians: Option<PathBuf>,
    pub responses: Option<PathBuf>,
    /// Directory with normalization rule files.
    pub rules: Option<PathBuf>,
}

impl Paths {
    /// The conventional file names inside `dir`; embeddings only if present.
    pub fn in_dir(dir: &Path) -> Paths {
        let d = DatasetPaths::in_dir(dir);
        let embeddings = dir.join("embeddings.tsv");
        Paths {
            terminology: Some(dir.join("terminology.tsv")),
            embeddings: embeddings.exists().then_some(embeddings),
            queries: None,
            cases: Some(d.cases),
            diagnosticians: Some(d.diagnosticians),
            responses: Some(d.responses),
            rules: None,
        }
    }

    fn rebase(&mut self, base: &Path) {
        for p in [
            &mut self.terminology,
            &mut self.embeddings,
            &mut self.queries,
            &mut self.cases,
            &mut self.diagnosticians,
            &mut self.responses,
            &mut self.rules,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn dataset(&self) -> Result<DatasetPaths> {
        let need =
            |p: &Option<PathBuf>, what: &str| p.clone().with_context(|| format!("no path configured for {what}"));
        Ok(DatasetPaths {
            cases: need(&self.cases, "cases")?,
            diagnosticians: need(&self.diagnosticians, "diagnosticians")?,
            responses: need(&self.responses, "responses")?,
        })
    }

    pub fn check_exist(&self) -> Result<()> {
        for p in
            [&self.terminology, &self.embeddings, &self.queries, &self.cases, &self.diagnosticians, &self.responses]
                .into_iter()
                .flatten()
        {
            if !p.exists() {
                bail!("{} does not exist", p.display());
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub k_folds: usize,
    pub master_seed: u64,
    pub metrics: Vec<MetricKind>,
    pub max_groups: usize,
    pub min_human_solvers: usize,
    pub min_cases_outperformance: usize,
    pub mode: Mode,
    /// One metric to fit prompts and weights for every reported metric.
    pub fit_metric: Option<MetricKind>,
    pub stratify: bool,
    /// Human slot counts for human-only and hybrid ensembles.
    pub human_counts: Vec<usize>,
    /// Metric that drives prompt choice and weights in pairwise analyses.
    pub analysis_metric: MetricKind,
    pub output: PathBuf,
    /// Pairs of ensemble specs for the complementarity command.
    pub pairs: Vec<[String; 2]>,
    pub paths: Paths,
    pub filters: DatasetFilter,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            k_folds: 5,
            master_seed: 0,
            metrics: MetricKind::ALL.to_vec(),
            max_groups: 100,
            min_human_solvers: 0,
            min_cases_outperformance: 5,
            mode: Mode::Weighted,
            fit_metric: None,
            stratify: false,
            human_counts: vec![1, 2, 3, 4, 5],
            analysis_metric: MetricKind::Mrr,
            output: PathBuf::from("out"),
            pairs: Vec::new(),
            paths: Paths::default(),
            filters: DatasetFilter::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.rebase(base);
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k_folds < 2 {
            bail!("k_folds must be at least 2");
        }
        if self.max_groups == 0 {
            bail!("max_groups must be at least 1");
        }
        if self.metrics.is_empty() {
            bail!("no metrics requested");
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "k_folds = 4\nmetrics = [\"top5\", \"mrr\"]\nmode = \"both\"\n[paths]\ncases = \"data/cases.jsonl\"\n[filters]\ntenure = \"physician\"\n",
        )
        .unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.k_folds, 4);
        assert_eq!(cfg.metrics, vec![MetricKind::Top5, MetricKind::Mrr]);
        assert_eq!(cfg.mode, Mode::Both);
        assert_eq!(cfg.paths.cases.unwrap(), dir.path().join("data/cases.jsonl"));
        assert_eq!(cfg.output, dir.path().join("out"));
        assert!(cfg.filters.tenure.is_some());
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "kfolds = 4\n").unwrap();
        assert!(RunConfig::load(&path).is_err());
    }

    #[test]
    fn round_trip() {
        let cfg = RunConfig { pairs: vec![["llm1".into(), "humans:1".into()]], ..RunConfig::default() };
        let text = cfg.to_toml().unwrap();
        assert_eq!(toml::from_str::<RunConfig>(&text).unwrap(), cfg);
    }
}
