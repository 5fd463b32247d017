use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::postprocess::{postprocess_llm_response, PostprocessRules};
use super::IngestionError;
use crate::ids::{CaseId, DiagnosticianId, PromptId};
use crate::terminology::{ConceptId, Terminology};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseVignette {
    pub case_id: CaseId,
    #[serde(default)]
    pub vignette_text: String,
    pub correct_concepts: BTreeSet<ConceptId>,
    #[serde(default)]
    pub attributes: BTreeMap<String, String>,
}

impl CaseVignette {
    pub fn specialty(&self) -> Option<&str> {
        self.attributes.get("specialty").map(String::as_str)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tenure {
    Attending,
    Fellow,
    Resident,
    Student,
}

impl Tenure {
    /// Attendings, fellows and residents are pooled as physicians.
    pub fn is_physician(self) -> bool {
        !matches!(self, Tenure::Student)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DiagnosticianKind {
    Human { tenure: Tenure },
    Llm { model_name: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DiagnosticianRecord", into = "DiagnosticianRecord")]
pub struct Diagnostician {
    pub diagnostician_id: DiagnosticianId,
    pub kind: DiagnosticianKind,
}

impl Diagnostician {
    pub fn human(id: &str, tenure: Tenure) -> Self {
        Diagnostician { diagnostician_id: id.into(), kind: DiagnosticianKind::Human { tenure } }
    }

    pub fn llm(id: &str, model_name: &str) -> Self {
        Diagnostician {
            diagnostician_id: id.into(),
            kind: DiagnosticianKind::Llm { model_name: model_name.to_string() },
        }
    }

    pub fn is_llm(&self) -> bool {
        matches!(self.kind, DiagnosticianKind::Llm { .. })
    }

    pub fn tenure(&self) -> Option<Tenure> {
        match self.kind {
            DiagnosticianKind::Human { tenure } => Some(tenure),
            DiagnosticianKind::Llm { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DiagnosticianRecord {
    diagnostician_id: DiagnosticianId,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tenure: Option<Tenure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    model_name: Option<String>,
}

impl TryFrom<DiagnosticianRecord> for Diagnostician {
    type Error = String;

    fn try_from(r: DiagnosticianRecord) -> Result<Self, String> {
        let kind = match (r.kind.as_str(), r.tenure, r.model_name) {
            ("human", Some(tenure), None) => DiagnosticianKind::Human { tenure },
            ("human", None, _) => return Err("human diagnostician needs a tenure".into()),
            ("llm", None, Some(model_name)) if !model_name.trim().is_empty() => DiagnosticianKind::Llm { model_name },
            ("llm", _, _) => return Err("llm diagnostician needs a model_name and no tenure".into()),
            (other, _, _) if other != "human" => return Err(format!("unknown kind {other:?}")),
            _ => return Err("human diagnostician cannot have a model_name".into()),
        };
        Ok(Diagnostician { diagnostician_id: r.diagnostician_id, kind })
    }
}

impl From<Diagnostician> for DiagnosticianRecord {
    fn from(d: Diagnostician) -> Self {
        match d.kind {
            DiagnosticianKind::Human { tenure } => DiagnosticianRecord {
                diagnostician_id: d.diagnostician_id,
                kind: "human".into(),
                tenure: Some(tenure),
                model_name: None,
            },
            DiagnosticianKind::Llm { model_name } => DiagnosticianRecord {
                diagnostician_id: d.diagnostician_id,
                kind: "llm".into(),
                tenure: None,
                model_name: Some(model_name),
            },
        }
    }
}

/// One diagnostician's ordered differential for one case, rank 1 first.
/// An empty list records a response that had no usable content.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedResponse {
    pub case_id: CaseId,
    pub diagnostician_id: DiagnosticianId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_id: Option<PromptId>,
    pub entries: Vec<String>,
}

impl RankedResponse {
    pub fn key(&self) -> ResponseKey {
        ResponseKey {
            case_id: self.case_id.clone(),
            diagnostician_id: self.diagnostician_id.clone(),
            prompt_id: self.prompt_id.clone(),
        }
    }

    pub fn is_no_answer(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ResponseKey {
    pub case_id: CaseId,
    pub diagnostician_id: DiagnosticianId,
    pub prompt_id: Option<PromptId>,
}

impl fmt::Display for ResponseKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}", self.case_id, self.diagnostician_id)?;
        if let Some(p) = &self.prompt_id {
            write!(f, ", {p}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Deserialize)]
struct ResponseRecord {
    case_id: CaseId,
    diagnostician_id: DiagnosticianId,
    #[serde(default)]
    prompt_id: Option<PromptId>,
    entries: Vec<String>,
    #[serde(default)]
    raw: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub cases: PathBuf,
    pub diagnosticians: PathBuf,
    pub responses: PathBuf,
}

impl DatasetPaths {
    /// Conventional file names inside one directory.
    pub fn in_dir(dir: &Path) -> Self {
        DatasetPaths {
            cases: dir.join("cases.jsonl"),
            diagnosticians: dir.join("diagnosticians.jsonl"),
            responses: dir.join("responses.jsonl"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadSummary {
    pub cases: usize,
    pub humans: usize,
    pub llms: usize,
    pub responses: usize,
    pub raw_transcripts: usize,
    pub no_answer: usize,
}

/// Cases, diagnosticians and their raw responses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dataset {
    pub cases: BTreeMap<CaseId, CaseVignette>,
    pub diagnosticians: BTreeMap<DiagnosticianId, Diagnostician>,
    pub responses: BTreeMap<ResponseKey, RankedResponse>,
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>, IngestionError> {
    let file = File::open(path).map_err(|source| IngestionError::Io { path: path.display().to_string(), source })?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| IngestionError::Io { path: path.display().to_string(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(&line).map_err(|e| IngestionError::Schema {
            path: path.display().to_string(),
            line: idx + 1,
            message: e.to_string(),
        })?;
        out.push((idx + 1, value));
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<(), IngestionError> {
    let io = |source| IngestionError::Io { path: path.display().to_string(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for item in items {
        let line = serde_json::to_string(&item).expect("dataset records serialize");
        writeln!(out, "{line}").map_err(io)?;
    }
    out.flush().map_err(io)
}

impl Dataset {
    /// Loads and cross-checks the three JSONL files.
    pub fn load(paths: &DatasetPaths, rules: &PostprocessRules) -> Result<(Dataset, LoadSummary), IngestionError> {
        let mut ds = Dataset::default();
        let mut summary = LoadSummary::default();
        let schema = |path: &Path, line: usize, message: String| IngestionError::Schema {
            path: path.display().to_string(),
            line,
            message,
        };

        for (line, case) in read_jsonl::<CaseVignette>(&paths.cases)? {
            if case.case_id.as_str().trim().is_empty() {
                return Err(schema(&paths.cases, line, "empty case_id".into()));
            }
            if case.correct_concepts.is_empty() {
                return Err(schema(&paths.cases, line, format!("case {} has no correct concepts", case.case_id)));
            }
            let id = case.case_id.clone();
            if ds.cases.insert(id.clone(), case).is_some() {
                return Err(IngestionError::Duplicate {
                    path: paths.cases.display().to_string(),
                    line,
                    what: format!("case {id}"),
                });
            }
        }
        if ds.cases.is_empty() {
            return Err(schema(&paths.cases, 0, "no cases".into()));
        }

        for (line, d) in read_jsonl::<Diagnostician>(&paths.diagnosticians)? {
            let id = d.diagnostician_id.clone();
            if id.as_str().trim().is_empty() {
                return Err(schema(&paths.diagnosticians, line, "empty diagnostician_id".into()));
            }
            if ds.diagnosticians.insert(id.clone(), d).is_some() {
                return Err(IngestionError::Duplicate {
                    path: paths.diagnosticians.display().to_string(),
                    line,
                    what: format!("diagnostician {id}"),
                });
            }
        }

        for (line, r) in read_jsonl::<ResponseRecord>(&paths.responses)? {
            let path = paths.responses.display().to_string();
            if !ds.cases.contains_key(&r.case_id) {
                return Err(IngestionError::DanglingReference { path, line, field: "case_id", id: r.case_id.0 });
            }
            let Some(who) = ds.diagnosticians.get(&r.diagnostician_id) else {
                return Err(IngestionError::DanglingReference {
                    path,
                    line,
                    field: "diagnostician_id",
                    id: r.diagnostician_id.0,
                });
            };
            if !who.is_llm() && r.prompt_id.is_some() {
                return Err(schema(&paths.responses, line, "prompt_id is only valid on LLM responses".into()));
            }
            let entries = if r.raw {
                if r.entries.len() != 1 {
                    return Err(schema(&paths.responses, line, "raw responses carry exactly one transcript".into()));
                }
                summary.raw_transcripts += 1;
                match postprocess_llm_response(&r.entries[0], rules) {
                    Ok(entries) => entries,
                    Err(IngestionError::EmptyResponse) => Vec::new(),
                    Err(e) => return Err(e),
                }
            } else {
                r.entries.iter().map(|e| e.trim().to_string()).filter(|e| !e.is_empty()).collect()
            };
            if entries.is_empty() {
                summary.no_answer += 1;
            }
            let response = RankedResponse {
                case_id: r.case_id,
                diagnostician_id: r.diagnostician_id,
                prompt_id: r.prompt_id,
                entries,
            };
            let key = response.key();
            if ds.responses.contains_key(&key) {
                return Err(IngestionError::Duplicate { path, line, what: format!("response {key}") });
            }
            ds.responses.insert(key, response);
        }

        summary.cases = ds.cases.len();
        summary.humans = ds.diagnosticians.values().filter(|d| !d.is_llm()).count();
        summary.llms = ds.diagnosticians.values().filter(|d| d.is_llm()).count();
        summary.responses = ds.responses.len();
        Ok((ds, summary))
    }

    /// Writes the dataset as cleaned JSONL (no raw transcripts).
    pub fn save(&self, paths: &DatasetPaths) -> Result<(), IngestionError> {
        write_jsonl(&paths.cases, self.cases.values())?;
        write_jsonl(&paths.diagnosticians, self.diagnosticians.values())?;
        write_jsonl(&paths.responses, self.responses.values())
    }

    /// Every correct concept must exist in the terminology.
    pub fn check_concepts(&self, terminology: &Terminology) -> Result<(), IngestionError> {
        for case in self.cases.values() {
            if let Some(missing) = case.correct_concepts.iter().find(|c| !terminology.contains(**c)) {
                return Err(IngestionError::UnknownConcept { case_id: case.case_id.clone(), concept_id: *missing });
            }
        }
        Ok(())
    }

    pub fn llms(&self) -> impl Iterator<Item = &Diagnostician> {
        self.diagnosticians.values().filter(|d| d.is_llm())
    }

    pub fn humans(&self) -> impl Iterator<Item = &Diagnostician> {
        self.diagnosticians.values().filter(|d| !d.is_llm())
    }

    /// Keeps the cases and humans that pass `filter`, and their responses.
    pub fn filtered(&self, filter: &DatasetFilter) -> Dataset {
        let cases: BTreeMap<_, _> = self
            .cases
            .iter()
            .filter(|(_, c)| filter.specialty.as_deref().is_none_or(|s| c.specialty() == Some(s)))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let diagnosticians: BTreeMap<_, _> = self
            .diagnosticians
            .iter()
            .filter(|(_, d)| match (filter.tenure, d.tenure()) {
                (Some(f), Some(t)) => f.admits(t),
                _ => true,
            })
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let responses = self
            .responses
            .iter()
            .filter(|(k, _)| cases.contains_key(&k.case_id) && diagnosticians.contains_key(&k.diagnostician_id))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Dataset { cases, diagnosticians, responses }
    }
}

/// Which humans to keep when slicing a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TenureFilter {
    Physician,
    Student,
    Attending,
    Fellow,
    Resident,
}

impl TenureFilter {
    pub fn admits(self, tenure: Tenure) -> bool {
        match self {
            TenureFilter::Physician => tenure.is_physician(),
            TenureFilter::Student => tenure == Tenure::Student,
            TenureFilter::Attending => tenure == Tenure::Attending,
            TenureFilter::Fellow => tenure == Tenure::Fellow,
            TenureFilter::Resident => tenure == Tenure::Resident,
        }
    }
}

impl FromStr for TenureFilter {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_lowercase().as_str() {
            "physician" | "physicians" => Ok(TenureFilter::Physician),
            "student" | "students" => Ok(TenureFilter::Student),
            "attending" => Ok(TenureFilter::Attending),
            "fellow" => Ok(TenureFilter::Fellow),
            "resident" => Ok(TenureFilter::Resident),
            other => Err(format!("unknown tenure filter {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetFilter {
    pub specialty: Option<String>,
    pub tenure: Option<TenureFilter>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_files(dir: &Path, cases: &str, diagnosticians: &str, responses: &str) -> DatasetPaths {
        let paths = DatasetPaths::in_dir(dir);
        std::fs::write(&paths.cases, cases).unwrap();
        std::fs::write(&paths.diagnosticians, diagnosticians).unwrap();
        std::fs::write(&paths.responses, responses).unwrap();
        paths
    }

    /// Twelve cases, three humans, one LLM with two prompts.
    fn fixture(dir: &Path) -> DatasetPaths {
        let mut cases = String::new();
        let mut responses = String::new();
        for i in 0..12 {
            let spec = if i % 2 == 0 { "cardiology" } else { "neurology" };
            cases.push_str(&format!(
                "{{\"case_id\":\"c{i:02}\",\"correct_concepts\":[\"{}\"],\"attributes\":{{\"specialty\":\"{spec}\"}}}}\n",
                100 + i
            ));
            for h in 0..3 {
                responses.push_str(&format!(
                    "{{\"case_id\":\"c{i:02}\",\"diagnostician_id\":\"h{h}\",\"entries\":[\"Dx {i}\",\" Dx {h} \"]}}\n"
                ));
            }
            for p in 1..=2 {
                responses.push_str(&format!(
                    "{{\"case_id\":\"c{i:02}\",\"diagnostician_id\":\"gpt\",\"prompt_id\":\"p{p}\",\"raw\":true,\"entries\":[\"Sure, here you go:\\n1. Dx {i}\\n2. Other\"]}}\n"
                ));
            }
        }
        let diagnosticians = "{\"diagnostician_id\":\"h0\",\"kind\":\"human\",\"tenure\":\"attending\"}\n\
            {\"diagnostician_id\":\"h1\",\"kind\":\"human\",\"tenure\":\"student\"}\n\
            {\"diagnostician_id\":\"h2\",\"kind\":\"human\",\"tenure\":\"resident\"}\n\
            {\"diagnostician_id\":\"gpt\",\"kind\":\"llm\",\"model_name\":\"gpt-4\"}\n";
        write_files(dir, &cases, diagnosticians, &responses)
    }

    #[test]
    fn fixture_loads_with_counts() {
        let dir = tempfile::tempdir().unwrap();
        let (ds, summary) = Dataset::load(&fixture(dir.path()), &PostprocessRules::default()).unwrap();
        assert_eq!(
            summary,
            LoadSummary { cases: 12, humans: 3, llms: 1, responses: 60, raw_transcripts: 24, no_answer: 0 }
        );
        let key = ResponseKey { case_id: "c03".into(), diagnostician_id: "gpt".into(), prompt_id: Some("p2".into()) };
        assert_eq!(ds.responses[&key].entries, vec!["Dx 3", "Other"]);
        let human = ResponseKey { case_id: "c03".into(), diagnostician_id: "h1".into(), prompt_id: None };
        assert_eq!(ds.responses[&human].entries, vec!["Dx 3", "Dx 1"]);
    }

    #[test]
    fn save_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let (ds, _) = Dataset::load(&fixture(dir.path()), &PostprocessRules::default()).unwrap();
        let out = tempfile::tempdir().unwrap();
        let paths = DatasetPaths::in_dir(out.path());
        ds.save(&paths).unwrap();
        let (again, summary) = Dataset::load(&paths, &PostprocessRules::default()).unwrap();
        assert_eq!(again, ds);
        assert_eq!(summary.raw_transcripts, 0);
    }

    #[test]
    fn dangling_reference_names_the_record() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_files(
            dir.path(),
            "{\"case_id\":\"c1\",\"correct_concepts\":[\"1\"]}\n",
            "{\"diagnostician_id\":\"h\",\"kind\":\"human\",\"tenure\":\"fellow\"}\n",
            "{\"case_id\":\"c1\",\"diagnostician_id\":\"h\",\"entries\":[\"a\"]}\n{\"case_id\":\"c9\",\"diagnostician_id\":\"h\",\"entries\":[\"a\"]}\n",
        );
        let err = Dataset::load(&paths, &PostprocessRules::default()).unwrap_err();
        assert!(
            matches!(&err, IngestionError::DanglingReference { line: 2, field: "case_id", id, .. } if id == "c9"),
            "{err}"
        );
        assert!(err.to_string().contains("c9"));
    }

    #[test]
    fn duplicates_and_bad_records_fail() {
        let dir = tempfile::tempdir().unwrap();
        let human = "{\"diagnostician_id\":\"h\",\"kind\":\"human\",\"tenure\":\"fellow\"}\n";
        let case = "{\"case_id\":\"c1\",\"correct_concepts\":[\"1\"]}\n";
        let dup = write_files(dir.path(), &format!("{case}{case}"), human, "");
        assert!(matches!(
            Dataset::load(&dup, &PostprocessRules::default()),
            Err(IngestionError::Duplicate { line: 2, .. })
        ));

        let row = "{\"case_id\":\"c1\",\"diagnostician_id\":\"h\",\"entries\":[\"a\"]}\n";
        let dup = write_files(dir.path(), case, human, &format!("{row}{row}"));
        assert!(matches!(Dataset::load(&dup, &PostprocessRules::default()), Err(IngestionError::Duplicate { .. })));

        let prompted = write_files(
            dir.path(),
            case,
            human,
            "{\"case_id\":\"c1\",\"diagnostician_id\":\"h\",\"prompt_id\":\"p\",\"entries\":[\"a\"]}\n",
        );
        assert!(matches!(Dataset::load(&prompted, &PostprocessRules::default()), Err(IngestionError::Schema { .. })));

        let empty = write_files(dir.path(), "", human, "");
        assert!(matches!(Dataset::load(&empty, &PostprocessRules::default()), Err(IngestionError::Schema { .. })));

        let no_correct = write_files(dir.path(), "{\"case_id\":\"c1\",\"correct_concepts\":[]}\n", human, "");
        assert!(Dataset::load(&no_correct, &PostprocessRules::default()).is_err());
    }

    #[test]
    fn blank_entries_are_a_no_answer() {
        let dir = tempfile::tempdir().unwrap();
        let paths = write_files(
            dir.path(),
            "{\"case_id\":\"c1\",\"correct_concepts\":[\"1\"]}\n",
            "{\"diagnostician_id\":\"h\",\"kind\":\"human\",\"tenure\":\"fellow\"}\n",
            "{\"case_id\":\"c1\",\"diagnostician_id\":\"h\",\"entries\":[\" \",\"\"]}\n",
        );
        let (ds, summary) = Dataset::load(&paths, &PostprocessRules::default()).unwrap();
        assert_eq!(summary.no_answer, 1);
        assert!(ds.responses.values().next().unwrap().is_no_answer());
    }

    #[test]
    fn filters_slice_cases_and_humans() {
        let dir = tempfile::tempdir().unwrap();
        let (ds, _) = Dataset::load(&fixture(dir.path()), &PostprocessRules::default()).unwrap();
        let cardio = ds.filtered(&DatasetFilter { specialty: Some("cardiology".into()), tenure: None });
        assert_eq!(cardio.cases.len(), 6);
        assert_eq!(cardio.responses.len(), 30);
        let physicians = ds.filtered(&DatasetFilter { specialty: None, tenure: Some(TenureFilter::Physician) });
        assert_eq!(physicians.humans().count(), 2);
        assert_eq!(physicians.llms().count(), 1);
        assert_eq!(physicians.responses.len(), 48);
    }
}
