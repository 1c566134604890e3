//! Schema-driven record extraction from scientific documents with human
//! verification in the loop.
//!
//! The crate covers document ingestion, retrieval of verified examples,
//! prompting, alignment of the two parser pipelines' outputs, provenance
//! grading and evaluation. Persistence and the HTTP API live in
//! `curate-store`.

pub mod aligner;
pub mod config;
pub mod eval;
pub mod generator;
pub mod ingest;
pub mod sampler;
pub mod verify;
