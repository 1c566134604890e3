use curate_core::eval::EvalError;
use curate_core::generator::{GenerateError, LlmError, RecordStatus, SchemaError};
use curate_core::ingest::IngestError;
use curate_core::verify::VerifyError;

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("database error: {0}")]
    Db(#[from] rusqlite::Error),
    #[error("corrupt stored value: {0}")]
    Corrupt(String),
    #[error("cannot parse schema: {0}")]
    SchemaParse(#[from] SchemaError),
    #[error("a project named {0:?} already exists")]
    DuplicateName(String),
    #[error("project {0} not found")]
    ProjectNotFound(i64),
    #[error("batch {0} not found")]
    BatchNotFound(i64),
    #[error("record {0} not found")]
    RecordNotFound(String),
    #[error("documents not ingested: {0:?}")]
    DocsNotIngested(Vec<String>),
    #[error("pilot batches take at most {cap} documents, got {requested}")]
    PilotCapExceeded { requested: usize, cap: usize },
    #[error("record {0} is locked")]
    RecordLocked(String),
    #[error("record {0} is already locked")]
    AlreadyLocked(String),
    #[error("record {record_id}: cannot go from {from} to {to}")]
    InvalidTransition {
        record_id: String,
        from: RecordStatus,
        to: RecordStatus,
    },
    #[error("column {0:?} is not in the schema")]
    UnknownColumn(String),
    #[error("project has no batches")]
    NoBatches,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("duplicate document id {0:?}")]
    DuplicateDocument(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl StoreError {
    /// Stable machine-readable name.
    pub fn code(&self) -> &'static str {
        match self {
            StoreError::Db(_) => "Db",
            StoreError::Corrupt(_) => "Corrupt",
            StoreError::SchemaParse(_) => "SchemaParseError",
            StoreError::DuplicateName(_) => "DuplicateName",
            StoreError::ProjectNotFound(_) => "ProjectNotFound",
            StoreError::BatchNotFound(_) => "BatchNotFound",
            StoreError::RecordNotFound(_) => "RecordNotFound",
            StoreError::DocsNotIngested(_) => "DocsNotIngested",
            StoreError::PilotCapExceeded { .. } => "PilotCapExceeded",
            StoreError::RecordLocked(_) => "RecordLocked",
            StoreError::AlreadyLocked(_) => "AlreadyLocked",
            StoreError::InvalidTransition { .. } => "InvalidTransition",
            StoreError::UnknownColumn(_) => "UnknownColumn",
            StoreError::NoBatches => "NoBatches",
            StoreError::InvalidRequest(_) => "InvalidRequest",
            StoreError::DuplicateDocument(_) => "DuplicateDocument",
            StoreError::Ingest(_) => "IngestError",
            StoreError::Generate(_) => "GenerationError",
            StoreError::Llm(_) => "LlmError",
            StoreError::Verify(VerifyError::UnknownAttribute(_)) => "UnknownAttribute",
            StoreError::Eval(_) => "EvalError",
            StoreError::Invariant(_) => "Invariant",
        }
    }
}

pub(crate) fn corrupt(e: serde_json::Error) -> StoreError {
    StoreError::Corrupt(e.to_string())
}
