//! Project persistence, curation actions with an audit log, export, and
//! the HTTP API.

mod db;
mod error;
mod export;
pub mod http;
mod service;

pub use db::schema_version;
pub use error::StoreError;
pub use export::{to_csv, to_dump};
pub use service::{
    AuditEvent, AuditKind, Backends, BatchSummary, BatchView, CurationService, DocFailure, DocumentSummary,
    DocumentUpload, Explanation, ExportFormat, Phase, ProjectView,
};
