//! Loading cases, diagnosticians and responses; transcript cleanup; mapping
//! responses onto concept IDs.

mod dataset;
mod postprocess;
mod resolve;

use thiserror::Error;

pub use dataset::{
    CaseVignette, Dataset, DatasetFilter, DatasetPaths, Diagnostician, DiagnosticianKind, LoadSummary, RankedResponse,
    ResponseKey, Tenure, TenureFilter,
};
pub use postprocess::{postprocess_llm_response, PostprocessRules, DEFAULT_INTRO_PATTERNS};
pub use resolve::{resolve, EntryResolution, MatchedDifferential, ResolutionLog, ResolvedCase, ResolvedDataset};

use crate::ids::CaseId;
use crate::terminology::ConceptId;

#[derive(Debug, Error)]
pub enum IngestionError {
    #[error("response is empty after post-processing")]
    EmptyResponse,
    #[error("{path}:{line}: {message}")]
    Schema { path: String, line: usize, message: String },
    #[error("{path}:{line}: unknown {field} {id:?}")]
    DanglingReference { path: String, line: usize, field: &'static str, id: String },
    #[error("{path}:{line}: duplicate {what}")]
    Duplicate { path: String, line: usize, what: String },
    #[error("case {case_id}: correct concept {concept_id} is not in the terminology")]
    UnknownConcept { case_id: CaseId, concept_id: ConceptId },
    #[error("no entry of response {key} could be resolved: {reason}")]
    Unresolvable { key: String, reason: String },
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}
