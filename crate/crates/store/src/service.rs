//! Projects, batches and curation actions over a single SQLite file.
//!
//! All mutations take the connection lock, so writes are serialized.
//! Batch generation runs outside the lock against a pool snapshot; locks
//! made meanwhile only reach later batches.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard};

use base64::Engine as _;
use chrono::Utc;
use indexmap::IndexMap;
use rayon::prelude::*;
use rusqlite::{params, Connection, OptionalExtension, Transaction};
use serde::{Deserialize, Serialize};

use curate_core::aligner::{align_dual, EmbeddingProvider};
use curate_core::config::EngineConfig;
use curate_core::generator::{generate_records, Cell, LlmProvider, Record, RecordStatus, Row, Schema};
use curate_core::ingest::{
    ingest_document, IngestRequest, OcrCommand, ParsedDocument, ParserKind, ParserService, TableBlock, TableInput,
    VariantFailure,
};
use curate_core::sampler::CorrectionPool;
use curate_core::verify::{
    build_explanation_prompt, provenance_check, supporting_paragraphs, MatchGrade, ScoredParagraph,
};

use crate::db;
use crate::error::{corrupt, StoreError};

pub type Result<T> = std::result::Result<T, StoreError>;

/// Each document with the records it contributes to an export.
pub type ExportedDocs = Vec<(String, Vec<Record>)>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Pilot,
    Batch,
}

impl Phase {
    fn as_str(self) -> &'static str {
        match self {
            Phase::Pilot => "PILOT",
            Phase::Batch => "BATCH",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "PILOT" => Ok(Phase::Pilot),
            "BATCH" => Ok(Phase::Batch),
            other => Err(StoreError::Corrupt(format!("phase {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AuditKind {
    UpdatingValue,
    LockingData,
    SettingIrrelevant,
    VettingViewed,
    ExplanationRequested,
}

impl AuditKind {
    fn as_str(self) -> &'static str {
        match self {
            AuditKind::UpdatingValue => "UPDATING_VALUE",
            AuditKind::LockingData => "LOCKING_DATA",
            AuditKind::SettingIrrelevant => "SETTING_IRRELEVANT",
            AuditKind::VettingViewed => "VETTING_VIEWED",
            AuditKind::ExplanationRequested => "EXPLANATION_REQUESTED",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "UPDATING_VALUE" => AuditKind::UpdatingValue,
            "LOCKING_DATA" => AuditKind::LockingData,
            "SETTING_IRRELEVANT" => AuditKind::SettingIrrelevant,
            "VETTING_VIEWED" => AuditKind::VettingViewed,
            "EXPLANATION_REQUESTED" => AuditKind::ExplanationRequested,
            other => return Err(StoreError::Corrupt(format!("audit kind {other:?}"))),
        })
    }
}

/// One logged curation action. For status changes `before`/`after` hold
/// statuses; for edits they hold cell values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEvent {
    pub event_id: i64,
    pub project_id: i64,
    pub actor: String,
    pub kind: AuditKind,
    pub record_id: Option<String>,
    pub column: Option<String>,
    pub before: Option<String>,
    pub after: Option<String>,
    pub timestamp: String,
}

/// A document to ingest. Content comes from `content` (UTF-8 text or TEI),
/// `content_base64` (binary, e.g. PDF) or, failing both, the local file
/// named by `uri`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DocumentUpload {
    pub doc_id: Option<String>,
    pub uri: Option<String>,
    pub content: Option<String>,
    pub content_base64: Option<String>,
    pub tables: Vec<TableInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentSummary {
    pub doc_id: String,
    pub source_uri: String,
    pub failed: bool,
    pub variants: Vec<ParserKind>,
    pub failures: Vec<VariantFailure>,
    pub ocr_applied: bool,
    pub tables: Vec<TableBlock>,
}

impl DocumentSummary {
    fn of(doc: &ParsedDocument) -> Self {
        DocumentSummary {
            doc_id: doc.doc_id.clone(),
            source_uri: doc.source_uri.clone(),
            failed: doc.is_failed(),
            variants: doc.variants.keys().copied().collect(),
            failures: doc.failures.clone(),
            ocr_applied: doc.ocr_applied,
            tables: doc.tables.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub batch_id: i64,
    /// 1-based position in the project's extraction history.
    pub seq: i64,
    pub phase: Phase,
    pub doc_ids: Vec<String>,
    pub pool_version_used: u64,
    pub created_at: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocFailure {
    pub doc_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchView {
    #[serde(flatten)]
    pub summary: BatchSummary,
    pub project_id: i64,
    pub failures: Vec<DocFailure>,
    pub records: Vec<Record>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectView {
    pub project_id: i64,
    pub name: String,
    pub schema: Schema,
    pub documents: Vec<DocumentSummary>,
    pub batches: Vec<BatchSummary>,
    pub pool_version: u64,
    pub pool_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub record_id: String,
    pub column: String,
    pub value: String,
    pub response: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExportFormat {
    Csv,
    Json,
}

/// External collaborators of the service.
#[derive(Clone)]
pub struct Backends {
    pub llm: Arc<dyn LlmProvider>,
    pub embedder: Arc<dyn EmbeddingProvider>,
    pub parser: Arc<dyn ParserService>,
    pub ocr: Option<OcrCommand>,
}

impl Backends {
    /// Everything the config names. The LLM must be configured.
    pub fn from_config(cfg: &EngineConfig) -> Result<Self> {
        Ok(Backends {
            llm: Arc::from(cfg.llm()?),
            embedder: Arc::from(cfg.embedder()),
            parser: Arc::from(cfg.parser_service()),
            ocr: cfg.ocr(),
        })
    }
}

pub struct CurationService {
    conn: Mutex<Connection>,
    cfg: EngineConfig,
    backends: Backends,
    workers: rayon::ThreadPool,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("value serializes")
}

fn from_json<T: for<'de> Deserialize<'de>>(s: &str) -> Result<T> {
    serde_json::from_str(s).map_err(corrupt)
}

impl CurationService {
    pub fn open(path: &Path, cfg: EngineConfig, backends: Backends) -> Result<Self> {
        Self::with_connection(Connection::open(path)?, cfg, backends)
    }

    pub fn in_memory(cfg: EngineConfig, backends: Backends) -> Result<Self> {
        Self::with_connection(Connection::open_in_memory()?, cfg, backends)
    }

    fn with_connection(mut conn: Connection, cfg: EngineConfig, backends: Backends) -> Result<Self> {
        db::migrate(&mut conn)?;
        let workers = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| StoreError::InvalidRequest(e.to_string()))?;
        Ok(CurationService {
            conn: Mutex::new(conn),
            cfg,
            backends,
            workers,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    fn conn(&self) -> MutexGuard<'_, Connection> {
        self.conn.lock().unwrap_or_else(|p| p.into_inner())
    }

    // ---- projects and documents ----

    pub fn create_project(&self, name: &str, schema_file: &str, documents: Vec<DocumentUpload>) -> Result<ProjectView> {
        let schema = Schema::parse_file(schema_file)?;
        let name = name.trim();
        if name.is_empty() {
            return Err(StoreError::InvalidRequest("project name is empty".into()));
        }
        let project_id = {
            let conn = self.conn();
            let exists: Option<i64> = conn
                .query_row("SELECT project_id FROM projects WHERE name = ?1", [name], |r| r.get(0))
                .optional()?;
            if exists.is_some() {
                return Err(StoreError::DuplicateName(name.to_string()));
            }
            conn.execute(
                "INSERT INTO projects (name, schema_json, pool_json, created_at) VALUES (?1, ?2, ?3, ?4)",
                params![name, to_json(&schema), to_json(&CorrectionPool::new()), now()],
            )?;
            conn.last_insert_rowid()
        };
        if !documents.is_empty() {
            self.add_documents(project_id, documents)?;
        }
        self.get_project(project_id)
    }

    /// Ingest documents (both parsers, OCR when needed) and store them.
    /// Parser failures are kept on the document rather than raised.
    pub fn add_documents(&self, project_id: i64, uploads: Vec<DocumentUpload>) -> Result<Vec<DocumentSummary>> {
        self.project_row(&self.conn(), project_id)?;
        let mut requests = Vec::with_capacity(uploads.len());
        let mut ids = HashSet::new();
        for (i, u) in uploads.into_iter().enumerate() {
            let req = upload_to_request(u, i)?;
            if !ids.insert(req.doc_id.clone()) {
                return Err(StoreError::DuplicateDocument(req.doc_id));
            }
            requests.push(req);
        }
        let b = &self.backends;
        let parsed: Vec<Result<ParsedDocument>> = self.workers.install(|| {
            requests
                .par_iter()
                .map(|req| Ok(ingest_document(req, b.parser.as_ref(), b.ocr.as_ref())?))
                .collect()
        });
        let parsed = parsed.into_iter().collect::<Result<Vec<_>>>()?;

        let mut conn = self.conn();
        let tx = conn.transaction()?;
        for doc in &parsed {
            let dup: Option<i64> = tx
                .query_row(
                    "SELECT seq FROM documents WHERE project_id = ?1 AND doc_id = ?2",
                    params![project_id, doc.doc_id],
                    |r| r.get(0),
                )
                .optional()?;
            if dup.is_some() {
                return Err(StoreError::DuplicateDocument(doc.doc_id.clone()));
            }
            tx.execute(
                "INSERT INTO documents (project_id, doc_id, parsed_json, failed) VALUES (?1, ?2, ?3, ?4)",
                params![project_id, doc.doc_id, to_json(doc), doc.is_failed()],
            )?;
        }
        tx.commit()?;
        Ok(parsed.iter().map(DocumentSummary::of).collect())
    }

    fn project_row(&self, conn: &Connection, project_id: i64) -> Result<(String, Schema, CorrectionPool)> {
        let row: Option<(String, String, String)> = conn
            .query_row(
                "SELECT name, schema_json, pool_json FROM projects WHERE project_id = ?1",
                [project_id],
                |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?)),
            )
            .optional()?;
        let (name, schema, pool) = row.ok_or(StoreError::ProjectNotFound(project_id))?;
        Ok((name, from_json(&schema)?, from_json(&pool)?))
    }

    fn documents(&self, conn: &Connection, project_id: i64) -> Result<Vec<ParsedDocument>> {
        let mut stmt = conn.prepare("SELECT parsed_json FROM documents WHERE project_id = ?1 ORDER BY seq")?;
        let rows = stmt.query_map([project_id], |r| r.get::<_, String>(0))?;
        rows.map(|r| from_json(&r?)).collect()
    }

    fn document(&self, conn: &Connection, project_id: i64, doc_id: &str) -> Result<ParsedDocument> {
        let json: String = conn
            .query_row(
                "SELECT parsed_json FROM documents WHERE project_id = ?1 AND doc_id = ?2",
                params![project_id, doc_id],
                |r| r.get(0),
            )
            .optional()?
            .ok_or_else(|| StoreError::DocsNotIngested(vec![doc_id.to_string()]))?;
        from_json(&json)
    }

    fn batches(&self, conn: &Connection, project_id: i64) -> Result<Vec<BatchSummary>> {
        let mut stmt = conn.prepare(
            "SELECT batch_id, seq, phase, doc_ids_json, pool_version_used, created_at
             FROM batches WHERE project_id = ?1 ORDER BY seq",
        )?;
        let rows = stmt.query_map([project_id], |r| {
            Ok((
                r.get::<_, i64>(0)?,
                r.get::<_, i64>(1)?,
                r.get::<_, String>(2)?,
                r.get::<_, String>(3)?,
                r.get::<_, i64>(4)?,
                r.get::<_, String>(5)?,
            ))
        })?;
        rows.map(|r| {
            let (batch_id, seq, phase, doc_ids, version, created_at) = r?;
            Ok(BatchSummary {
                batch_id,
                seq,
                phase: Phase::parse(&phase)?,
                doc_ids: from_json(&doc_ids)?,
                pool_version_used: version as u64,
                created_at,
            })
        })
        .collect()
    }

    pub fn project_id_by_name(&self, name: &str) -> Result<Option<i64>> {
        Ok(self
            .conn()
            .query_row("SELECT project_id FROM projects WHERE name = ?1", [name.trim()], |r| r.get(0))
            .optional()?)
    }

    pub fn get_project(&self, project_id: i64) -> Result<ProjectView> {
        let conn = self.conn();
        let (name, schema, pool) = self.project_row(&conn, project_id)?;
        Ok(ProjectView {
            project_id,
            name,
            schema,
            documents: self.documents(&conn, project_id)?.iter().map(DocumentSummary::of).collect(),
            batches: self.batches(&conn, project_id)?,
            pool_version: pool.version(),
            pool_records: pool.entries().iter().map(|e| e.records.len()).sum(),
        })
    }

    pub fn pool_snapshot(&self, project_id: i64) -> Result<CorrectionPool> {
        Ok(self.project_row(&self.conn(), project_id)?.2)
    }

    /// Replace the schema. Cells of dropped columns move to the record's
    /// retired set; new columns start empty; a retired column that comes
    /// back is restored.
    pub fn update_schema(&self, project_id: i64, schema_file: &str) -> Result<Schema> {
        let mut conn = self.conn();
        let (_, old, mut pool) = self.project_row(&conn, project_id)?;
        let parsed = Schema::parse_file(schema_file)?;
        let schema = Schema::with_columns(parsed.columns().to_vec(), old.version() + 1)?;
        let tx = conn.transaction()?;
        let records: Vec<(String, String)> = {
            let mut stmt = tx.prepare("SELECT record_id, record_json FROM records WHERE project_id = ?1")?;
            let rows = stmt.query_map([project_id], |r| Ok((r.get(0)?, r.get(1)?)))?;
            rows.collect::<std::result::Result<_, _>>()?
        };
        for (_, json) in records {
            let mut rec: Record = from_json(&json)?;
            remap_record(&mut rec, &schema);
            save_record(&tx, &rec)?;
        }
        pool.map_rows(|row| Row::from_pairs(&schema, row.iter()));
        tx.execute(
            "UPDATE projects SET schema_json = ?1, pool_json = ?2 WHERE project_id = ?3",
            params![to_json(&schema), to_json(&pool), project_id],
        )?;
        check_pool_invariant(&tx, project_id, &pool)?;
        tx.commit()?;
        Ok(schema)
    }

    // ---- batches ----

    /// Generate, align and grade records for the given documents.
    pub fn run_batch(&self, project_id: i64, phase: Phase, doc_ids: &[String]) -> Result<BatchView> {
        if doc_ids.is_empty() {
            return Err(StoreError::InvalidRequest("a batch needs at least one document".into()));
        }
        let unique: BTreeSet<&String> = doc_ids.iter().collect();
        if unique.len() != doc_ids.len() {
            return Err(StoreError::InvalidRequest("duplicate doc_ids in batch".into()));
        }
        if phase == Phase::Pilot && doc_ids.len() > self.cfg.pilot_cap {
            return Err(StoreError::PilotCapExceeded {
                requested: doc_ids.len(),
                cap: self.cfg.pilot_cap,
            });
        }

        let (schema, snapshot, docs) = {
            let conn = self.conn();
            let (_, schema, pool) = self.project_row(&conn, project_id)?;
            let mut docs = Vec::with_capacity(doc_ids.len());
            let mut missing = Vec::new();
            for id in doc_ids {
                match self.document(&conn, project_id, id) {
                    Ok(d) if !d.is_failed() => docs.push(d),
                    Ok(_) | Err(StoreError::DocsNotIngested(_)) => missing.push(id.clone()),
                    Err(e) => return Err(e),
                }
            }
            if !missing.is_empty() {
                return Err(StoreError::DocsNotIngested(missing));
            }
            (schema, Arc::new(pool), docs)
        };

        let gen_cfg = self.cfg.generation();
        let bands = self.cfg.bands();
        let b = &self.backends;
        let outcomes: Vec<std::result::Result<Vec<Record>, String>> = self.workers.install(|| {
            docs.par_iter()
                .map(|doc| {
                    let sets = generate_records(doc, &schema, &snapshot, b.llm.as_ref(), &gen_cfg)
                        .map_err(|e| e.to_string())?;
                    let merged = align_dual(&sets, &schema, b.embedder.as_ref(), self.cfg.suggest_threshold)
                        .map_err(|e| e.to_string())?;
                    Ok(merged
                        .into_iter()
                        .map(|m| {
                            let mut rec = Record::new(String::new(), &doc.doc_id, m.origin, m.values);
                            rec.alternative = m.alternative;
                            grade_cells(&mut rec, doc, bands);
                            rec
                        })
                        .collect())
                })
                .collect()
        });

        let mut conn = self.conn();
        let tx = conn.transaction()?;
        let seq: i64 = tx.query_row(
            "SELECT COALESCE(MAX(seq), 0) + 1 FROM batches WHERE project_id = ?1",
            [project_id],
            |r| r.get(0),
        )?;
        let mut failures = Vec::new();
        for (doc, outcome) in docs.iter().zip(&outcomes) {
            if let Err(reason) = outcome {
                failures.push(DocFailure {
                    doc_id: doc.doc_id.clone(),
                    reason: reason.clone(),
                });
            }
        }
        let created_at = now();
        tx.execute(
            "INSERT INTO batches (project_id, seq, phase, doc_ids_json, pool_version_used, failures_json, created_at)
             VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7)",
            params![
                project_id,
                seq,
                phase.as_str(),
                to_json(&doc_ids),
                snapshot.version() as i64,
                to_json(&failures),
                created_at
            ],
        )?;
        let batch_id = tx.last_insert_rowid();
        let mut position = 0i64;
        for outcome in outcomes {
            for mut rec in outcome.unwrap_or_default() {
                rec.record_id = format!("b{batch_id}-r{position}");
                tx.execute(
                    "INSERT INTO records (record_id, project_id, batch_id, position, doc_id, status, record_json, initial_json)
                     VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
                    params![
                        rec.record_id,
                        project_id,
                        batch_id,
                        position,
                        rec.doc_id,
                        rec.status.as_str(),
                        to_json(&rec),
                        to_json(&rec.values())
                    ],
                )?;
                position += 1;
            }
        }
        tx.commit()?;
        drop(conn);
        self.get_batch(batch_id)
    }

    pub fn get_batch(&self, batch_id: i64) -> Result<BatchView> {
        let conn = self.conn();
        let row: Option<(i64, i64, String, String, i64, String, String)> = conn
            .query_row(
                "SELECT project_id, seq, phase, doc_ids_json, pool_version_used, failures_json, created_at
                 FROM batches WHERE batch_id = ?1",
                [batch_id],
                |r| Ok((r.get(0)?, r.get(1)?, r.get(2)?, r.get(3)?, r.get(4)?, r.get(5)?, r.get(6)?)),
            )
            .optional()?;
        let (project_id, seq, phase, doc_ids, version, failures, created_at) =
            row.ok_or(StoreError::BatchNotFound(batch_id))?;
        let mut stmt = conn.prepare("SELECT record_json FROM records WHERE batch_id = ?1 ORDER BY position")?;
        let records = stmt
            .query_map([batch_id], |r| r.get::<_, String>(0))?
            .map(|r| from_json(&r?))
            .collect::<Result<Vec<Record>>>()?;
        Ok(BatchView {
            summary: BatchSummary {
                batch_id,
                seq,
                phase: Phase::parse(&phase)?,
                doc_ids: from_json(&doc_ids)?,
                pool_version_used: version as u64,
                created_at,
            },
            project_id,
            failures: from_json(&failures)?,
            records,
        })
    }

    // ---- records ----

    fn record(&self, conn: &Connection, record_id: &str) -> Result<(i64, Record)> {
        let row: Option<(i64, String)> = conn
            .query_row(
                "SELECT project_id, record_json FROM records WHERE record_id = ?1",
                [record_id],
                |r| Ok((r.get(0)?, r.get(1)?)),
            )
            .optional()?;
        let (pid, json) = row.ok_or_else(|| StoreError::RecordNotFound(record_id.to_string()))?;
        Ok((pid, from_json(&json)?))
    }

    pub fn get_record(&self, record_id: &str) -> Result<Record> {
        Ok(self.record(&self.conn(), record_id)?.1)
    }

    pub fn apply_edit(&self, record_id: &str, column: &str, new_value: &str, actor: &str) -> Result<Record> {
        let mut conn = self.conn();
        let (pid, mut rec) = self.record(&conn, record_id)?;
        let (_, schema, pool) = self.project_row(&conn, pid)?;
        match rec.status {
            RecordStatus::Locked => return Err(StoreError::RecordLocked(record_id.to_string())),
            RecordStatus::Irrelevant => {
                return Err(StoreError::InvalidTransition {
                    record_id: record_id.to_string(),
                    from: rec.status,
                    to: RecordStatus::Edited,
                })
            }
            RecordStatus::Generated | RecordStatus::Edited => {}
        }
        if !schema.contains(column) {
            return Err(StoreError::UnknownColumn(column.to_string()));
        }
        let doc = self.document(&conn, pid, &rec.doc_id)?;
        let before = rec.value(column).unwrap_or_default().to_string();
        let cell = rec.cells.entry(column.to_string()).or_insert_with(|| Cell::new(""));
        cell.value = new_value.to_string();
        cell.edited = true;
        cell.provenance = Some(provenance_check(new_value, &doc, self.cfg.bands()));
        rec.status = RecordStatus::Edited;

        let tx = conn.transaction()?;
        save_record(&tx, &rec)?;
        append_audit(
            &tx,
            pid,
            actor,
            AuditKind::UpdatingValue,
            Some(record_id),
            Some(column),
            Some(&before),
            Some(new_value),
        )?;
        check_pool_invariant(&tx, pid, &pool)?;
        tx.commit()?;
        Ok(rec)
    }

    /// Lock a record and add it (with its document text) to the pool.
    pub fn lock_record(&self, record_id: &str, actor: &str) -> Result<Record> {
        let mut conn = self.conn();
        let (pid, mut rec) = self.record(&conn, record_id)?;
        let before = rec.status;
        match before {
            RecordStatus::Locked => return Err(StoreError::AlreadyLocked(record_id.to_string())),
            RecordStatus::Irrelevant => {
                return Err(StoreError::InvalidTransition {
                    record_id: record_id.to_string(),
                    from: before,
                    to: RecordStatus::Locked,
                })
            }
            _ => {}
        }
        let (_, _, mut pool) = self.project_row(&conn, pid)?;
        let doc = self.document(&conn, pid, &rec.doc_id)?;
        rec.status = RecordStatus::Locked;
        pool.insert_locked(&doc.query_text(), &rec)
            .map_err(|e| StoreError::Invariant(e.to_string()))?;
        self.commit_status_change(&mut conn, pid, &rec, &pool, actor, AuditKind::LockingData, before)?;
        Ok(rec)
    }

    /// Back to EDITED; the record leaves the pool.
    pub fn unlock_record(&self, record_id: &str, actor: &str) -> Result<Record> {
        let mut conn = self.conn();
        let (pid, mut rec) = self.record(&conn, record_id)?;
        let before = rec.status;
        if before != RecordStatus::Locked {
            return Err(StoreError::InvalidTransition {
                record_id: record_id.to_string(),
                from: before,
                to: RecordStatus::Edited,
            });
        }
        let (_, _, mut pool) = self.project_row(&conn, pid)?;
        pool.remove_record(record_id);
        rec.status = RecordStatus::Edited;
        self.commit_status_change(&mut conn, pid, &rec, &pool, actor, AuditKind::LockingData, before)?;
        Ok(rec)
    }

    /// Idempotent on records that are already irrelevant.
    pub fn mark_irrelevant(&self, record_id: &str, actor: &str) -> Result<Record> {
        let mut conn = self.conn();
        let (pid, mut rec) = self.record(&conn, record_id)?;
        let before = rec.status;
        match before {
            RecordStatus::Irrelevant => return Ok(rec),
            RecordStatus::Locked => {
                return Err(StoreError::InvalidTransition {
                    record_id: record_id.to_string(),
                    from: before,
                    to: RecordStatus::Irrelevant,
                })
            }
            _ => {}
        }
        let (_, _, pool) = self.project_row(&conn, pid)?;
        rec.status = RecordStatus::Irrelevant;
        self.commit_status_change(&mut conn, pid, &rec, &pool, actor, AuditKind::SettingIrrelevant, before)?;
        Ok(rec)
    }

    /// Undo [`mark_irrelevant`](Self::mark_irrelevant): EDITED when any cell
    /// was edited, GENERATED otherwise.
    pub fn unmark_irrelevant(&self, record_id: &str, actor: &str) -> Result<Record> {
        let mut conn = self.conn();
        let (pid, mut rec) = self.record(&conn, record_id)?;
        let before = rec.status;
        let to = if rec.cells.values().any(|c| c.edited) {
            RecordStatus::Edited
        } else {
            RecordStatus::Generated
        };
        if before != RecordStatus::Irrelevant {
            return Err(StoreError::InvalidTransition {
                record_id: record_id.to_string(),
                from: before,
                to,
            });
        }
        let (_, _, pool) = self.project_row(&conn, pid)?;
        rec.status = to;
        self.commit_status_change(&mut conn, pid, &rec, &pool, actor, AuditKind::SettingIrrelevant, before)?;
        Ok(rec)
    }

    #[allow(clippy::too_many_arguments)]
    fn commit_status_change(
        &self,
        conn: &mut Connection,
        pid: i64,
        rec: &Record,
        pool: &CorrectionPool,
        actor: &str,
        kind: AuditKind,
        before: RecordStatus,
    ) -> Result<()> {
        let tx = conn.transaction()?;
        save_record(&tx, rec)?;
        tx.execute(
            "UPDATE projects SET pool_json = ?1 WHERE project_id = ?2",
            params![to_json(pool), pid],
        )?;
        append_audit(
            &tx,
            pid,
            actor,
            kind,
            Some(&rec.record_id),
            None,
            Some(before.as_str()),
            Some(rec.status.as_str()),
        )?;
        check_pool_invariant(&tx, pid, pool)?;
        tx.commit()?;
        Ok(())
    }

    pub fn provenance(&self, record_id: &str) -> Result<IndexMap<String, Option<MatchGrade>>> {
        let rec = self.get_record(record_id)?;
        Ok(rec.cells.into_iter().map(|(k, c)| (k, c.provenance)).collect())
    }

    /// Top paragraphs supporting one cell (or, without a column, the whole
    /// record). Logged as a vetting view.
    pub fn support(&self, record_id: &str, column: Option<&str>, k: usize, actor: &str) -> Result<Vec<ScoredParagraph>> {
        let conn = self.conn();
        let (pid, rec) = self.record(&conn, record_id)?;
        let (_, schema, _) = self.project_row(&conn, pid)?;
        let values: Vec<&str> = match column {
            Some(c) if !schema.contains(c) => return Err(StoreError::UnknownColumn(c.to_string())),
            Some(c) => vec![rec.value(c).unwrap_or_default()],
            None => rec.cells.values().map(|c| c.value.as_str()).filter(|v| !v.is_empty()).collect(),
        };
        let doc = self.document(&conn, pid, &rec.doc_id)?;
        let top = supporting_paragraphs(&values, &doc, k, self.cfg.bm25());
        append_audit(&conn, pid, actor, AuditKind::VettingViewed, Some(record_id), column, None, None)?;
        Ok(top)
    }

    /// Ask the LLM where the document states a cell's value. The answer is
    /// returned verbatim and never written into the record.
    pub fn explain(&self, record_id: &str, column: &str, actor: &str) -> Result<Explanation> {
        let (pid, prompt, value) = {
            let conn = self.conn();
            let (pid, rec) = self.record(&conn, record_id)?;
            let (_, schema, _) = self.project_row(&conn, pid)?;
            let doc = self.document(&conn, pid, &rec.doc_id)?;
            let value = rec.value(column).unwrap_or_default().to_string();
            let prompt = build_explanation_prompt(&schema, column, &value, &doc.query_text())?;
            (pid, prompt, value)
        };
        let response = self.backends.llm.complete(&prompt)?;
        append_audit(
            &self.conn(),
            pid,
            actor,
            AuditKind::ExplanationRequested,
            Some(record_id),
            Some(column),
            Some(&value),
            Some(&response),
        )?;
        Ok(Explanation {
            record_id: record_id.to_string(),
            column: column.to_string(),
            value,
            response,
        })
    }

    pub fn audit_log(&self, project_id: i64) -> Result<Vec<AuditEvent>> {
        let conn = self.conn();
        self.project_row(&conn, project_id)?;
        let mut stmt = conn.prepare(
            "SELECT event_id, actor, kind, record_id, column_name, before_value, after_value, created_at
             FROM audit WHERE project_id = ?1 ORDER BY event_id",
        )?;
        let rows = stmt.query_map([project_id], |r| {
            Ok((
                r.get::<_, i64>(0)?,
                r.get::<_, String>(1)?,
                r.get::<_, String>(2)?,
                r.get::<_, Option<String>>(3)?,
                r.get::<_, Option<String>>(4)?,
                r.get::<_, Option<String>>(5)?,
                r.get::<_, Option<String>>(6)?,
                r.get::<_, String>(7)?,
            ))
        })?;
        rows.map(|r| {
            let (event_id, actor, kind, record_id, column, before, after, timestamp) = r?;
            Ok(AuditEvent {
                event_id,
                project_id,
                actor,
                kind: AuditKind::parse(&kind)?,
                record_id,
                column,
                before,
                after,
                timestamp,
            })
        })
        .collect()
    }

    /// Generated values of every record with the logged edits applied in
    /// order; equals the current values when the log is complete.
    pub fn replay_audit(&self, project_id: i64) -> Result<IndexMap<String, Row>> {
        let events = self.audit_log(project_id)?;
        let conn = self.conn();
        let mut stmt =
            conn.prepare("SELECT record_id, initial_json FROM records WHERE project_id = ?1 ORDER BY batch_id, position")?;
        let mut values: IndexMap<String, Row> = stmt
            .query_map([project_id], |r| Ok((r.get::<_, String>(0)?, r.get::<_, String>(1)?)))?
            .map(|r| {
                let (id, json) = r?;
                Ok((id, from_json(&json)?))
            })
            .collect::<Result<_>>()?;
        for e in events.iter().filter(|e| e.kind == AuditKind::UpdatingValue) {
            if let (Some(id), Some(col), Some(after)) = (&e.record_id, &e.column, &e.after) {
                if let Some(row) = values.get_mut(id) {
                    row.set(col, after.clone());
                }
            }
        }
        Ok(values)
    }

    /// Records of each document from the latest batch that contains it,
    /// documents in ingestion order.
    pub fn exported_records(&self, project_id: i64, include_irrelevant: bool) -> Result<(Schema, ExportedDocs)> {
        let conn = self.conn();
        let (_, schema, _) = self.project_row(&conn, project_id)?;
        let batches = self.batches(&conn, project_id)?;
        if batches.is_empty() {
            return Err(StoreError::NoBatches);
        }
        let mut latest: HashMap<&str, i64> = HashMap::new();
        for b in &batches {
            for d in &b.doc_ids {
                latest.insert(d, b.batch_id);
            }
        }
        let mut stmt = conn.prepare(
            "SELECT record_json FROM records WHERE batch_id = ?1 AND doc_id = ?2 ORDER BY position",
        )?;
        let mut out = Vec::new();
        for doc in self.documents(&conn, project_id)? {
            let Some(&batch_id) = latest.get(doc.doc_id.as_str()) else { continue };
            let records = stmt
                .query_map(params![batch_id, doc.doc_id], |r| r.get::<_, String>(0))?
                .map(|r| from_json::<Record>(&r?))
                .collect::<Result<Vec<_>>>()?
                .into_iter()
                .filter(|r| include_irrelevant || r.status != RecordStatus::Irrelevant)
                .collect();
            out.push((doc.doc_id.clone(), records));
        }
        Ok((schema, out))
    }

    pub fn export(&self, project_id: i64, format: ExportFormat, include_irrelevant: bool) -> Result<Vec<u8>> {
        let (schema, docs) = self.exported_records(project_id, include_irrelevant)?;
        Ok(match format {
            ExportFormat::Csv => crate::export::to_csv(&schema, &docs),
            ExportFormat::Json => crate::export::to_dump(&schema, &docs).to_json_pretty().into_bytes(),
        })
    }
}

fn upload_to_request(u: DocumentUpload, index: usize) -> Result<IngestRequest> {
    let raw = match (&u.content, &u.content_base64, &u.uri) {
        (Some(text), _, _) => text.clone().into_bytes(),
        (None, Some(b64), _) => base64::engine::general_purpose::STANDARD
            .decode(b64.trim())
            .map_err(|e| StoreError::InvalidRequest(format!("content_base64: {e}")))?,
        (None, None, Some(uri)) => {
            let path = uri.strip_prefix("file://").unwrap_or(uri);
            std::fs::read(path).map_err(|e| StoreError::InvalidRequest(format!("{uri}: {e}")))?
        }
        (None, None, None) => {
            return Err(StoreError::InvalidRequest(
                "document needs content, content_base64 or uri".into(),
            ))
        }
    };
    let doc_id = match (u.doc_id, &u.uri) {
        (Some(id), _) if !id.trim().is_empty() => id.trim().to_string(),
        (_, Some(uri)) => Path::new(uri.strip_prefix("file://").unwrap_or(uri))
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("doc{index}")),
        _ => format!("doc{index}"),
    };
    Ok(IngestRequest {
        source_uri: u.uri.unwrap_or_else(|| format!("upload:{doc_id}")),
        doc_id,
        raw,
        tables: u.tables,
    })
}

fn grade_cells(rec: &mut Record, doc: &ParsedDocument, bands: curate_core::verify::Bands) {
    for cell in rec.cells.values_mut() {
        cell.provenance = Some(provenance_check(&cell.value, doc, bands));
    }
}

fn remap_record(rec: &mut Record, schema: &Schema) {
    let mut old = std::mem::take(&mut rec.cells);
    let mut cells = IndexMap::new();
    for name in schema.names() {
        let cell = old
            .shift_remove(name)
            .or_else(|| rec.retired.shift_remove(name).map(Cell::new))
            .unwrap_or_else(|| Cell::new(""));
        cells.insert(name.to_string(), cell);
    }
    for (name, cell) in old {
        rec.retired.insert(name, cell.value);
    }
    rec.cells = cells;
}

fn save_record(tx: &Connection, rec: &Record) -> Result<()> {
    let n = tx.execute(
        "UPDATE records SET status = ?1, record_json = ?2 WHERE record_id = ?3",
        params![rec.status.as_str(), to_json(rec), rec.record_id],
    )?;
    if n != 1 {
        return Err(StoreError::RecordNotFound(rec.record_id.clone()));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn append_audit(
    conn: &Connection,
    project_id: i64,
    actor: &str,
    kind: AuditKind,
    record_id: Option<&str>,
    column: Option<&str>,
    before: Option<&str>,
    after: Option<&str>,
) -> Result<()> {
    conn.execute(
        "INSERT INTO audit (project_id, actor, kind, record_id, column_name, before_value, after_value, created_at)
         VALUES (?1, ?2, ?3, ?4, ?5, ?6, ?7, ?8)",
        params![project_id, actor, kind.as_str(), record_id, column, before, after, now()],
    )?;
    Ok(())
}

/// Pool membership must equal LOCKED status.
fn check_pool_invariant(tx: &Transaction<'_>, project_id: i64, pool: &CorrectionPool) -> Result<()> {
    let mut stmt = tx.prepare("SELECT record_id FROM records WHERE project_id = ?1 AND status = 'LOCKED'")?;
    let locked: BTreeSet<String> = stmt
        .query_map([project_id], |r| r.get(0))?
        .collect::<std::result::Result<_, _>>()?;
    let pooled: BTreeSet<String> = pool
        .entries()
        .iter()
        .flat_map(|e| e.records.iter().map(|r| r.record_id.clone()))
        .collect();
    if locked != pooled {
        return Err(StoreError::Invariant(format!(
            "locked records {locked:?} differ from pooled records {pooled:?}"
        )));
    }
    Ok(())
}
