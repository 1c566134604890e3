//! Leave-one-out replay of the curation loop: every document is predicted
//! with demonstrations drawn from a random pool of the *other* documents.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CorrectionPool, PoolEntry, PoolRecord};
use crate::aligner::{align_dual, HashingEmbedder, DEFAULT_SUGGEST_THRESHOLD};
use crate::eval::{EvalError, TableDump};
use crate::generator::{generate_records, GenerationConfig, LlmProvider, Row, Schema};
use crate::ingest::{segment_plain_text, tei_paragraphs, ParsedDocument, ParserKind, Variant};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("missing gold dump {0}")]
    MissingGold(PathBuf),
    #[error("missing document text for {0:?} (expected {0}.txt or {0}.xml under docs/)")]
    MissingDocument(String),
    #[error("{path}: {reason}")]
    Io { path: PathBuf, reason: String },
    #[error(transparent)]
    Gold(#[from] EvalError),
    #[error("dataset has no documents")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetDocument {
    pub doc: ParsedDocument,
    pub gold: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: Schema,
    pub documents: Vec<DatasetDocument>,
}

impl Dataset {
    /// Load `gold.json` (a table dump) plus `docs/{doc_id}.txt` (plain
    /// text) or `docs/{doc_id}.xml` (TEI), in gold order.
    pub fn load(dir: &Path) -> Result<Self, DatasetError> {
        let gold_path = dir.join("gold.json");
        if !gold_path.is_file() {
            return Err(DatasetError::MissingGold(gold_path));
        }
        let text = read(&gold_path)?;
        let gold = TableDump::parse(&text)?;
        let schema = gold.schema()?;
        let mut documents = Vec::with_capacity(gold.documents.len());
        for d in &gold.documents {
            let base = dir.join("docs");
            let txt = base.join(format!("{}.txt", d.doc_id));
            let xml = base.join(format!("{}.xml", d.doc_id));
            let mut doc = ParsedDocument::new(&d.doc_id, "");
            if xml.is_file() {
                let paras = tei_paragraphs(&read(&xml)?).map_err(|reason| DatasetError::Io {
                    path: xml.clone(),
                    reason,
                })?;
                doc.source_uri = xml.display().to_string();
                doc.variants.insert(ParserKind::StructuredTei, Variant::from_paragraphs(paras));
            } else if txt.is_file() {
                doc.source_uri = txt.display().to_string();
                doc.variants
                    .insert(ParserKind::GenericText, Variant::from_paragraphs(segment_plain_text(&read(&txt)?)));
            } else {
                return Err(DatasetError::MissingDocument(d.doc_id.clone()));
            }
            documents.push(DatasetDocument {
                doc,
                gold: gold.rows(d),
            });
        }
        if documents.is_empty() {
            return Err(DatasetError::Empty);
        }
        Ok(Dataset { schema, documents })
    }

    pub fn gold_dump(&self) -> TableDump {
        let mut t = TableDump::new(&self.schema);
        for d in &self.documents {
            t.push_document(&d.doc.doc_id, &d.gold);
        }
        t
    }
}

fn read(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|e| DatasetError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Pool size `k`.
    pub pool_size: usize,
    /// Shots `m`.
    pub shots: usize,
    pub seed: u64,
    pub generation: GenerationConfig,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            pool_size: 10,
            shots: super::DEFAULT_SHOTS,
            seed: 0,
            generation: GenerationConfig::default(),
        }
    }
}

/// What happened for one test document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTrace {
    pub doc_id: String,
    /// Sampled pool, in dataset order.
    pub pool_doc_ids: Vec<String>,
    /// Demonstrations actually used, best first.
    pub example_doc_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub table: TableDump,
    pub trace: Vec<SimulationTrace>,
}

/// Indices of the pool for test document `t`: a uniform sample of
/// `min(k, n - 1)` other documents, drawn from a stream keyed by `t`.
pub fn sample_pool(n: usize, t: usize, k: usize, seed: u64) -> Vec<usize> {
    let candidates: Vec<usize> = (0..n).filter(|&i| i != t).collect();
    let amount = k.min(candidates.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t as u64);
    let mut picked: Vec<usize> = rand::seq::index::sample(&mut rng, candidates.len(), amount)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    picked.sort_unstable();
    picked
}

/// Run the loop over every document. Generator failures are recorded in
/// the trace and yield an empty prediction for that document.
pub fn simulate_hatdc(dataset: &Dataset, cfg: &SimulationConfig, llm: &dyn LlmProvider) -> SimulationOutput {
    let n = dataset.documents.len();
    let gen_cfg = GenerationConfig {
        shots: cfg.shots,
        ..cfg.generation
    };
    let embedder = HashingEmbedder::default();
    let results: Vec<(Vec<Row>, SimulationTrace)> = (0..n)
        .into_par_iter()
        .map(|t| {
            let test = &dataset.documents[t];
            let pool_idx = sample_pool(n, t, cfg.pool_size, cfg.seed);
            let entries = pool_idx
                .iter()
                .map(|&i| {
                    let d = &dataset.documents[i];
                    PoolEntry {
                        doc_id: d.doc.doc_id.clone(),
                        text: d.doc.query_text(),
                        records: d
                            .gold
                            .iter()
                            .enumerate()
                            .map(|(r, values)| PoolRecord {
                                record_id: format!("{}#{r}", d.doc.doc_id),
                                values: values.clone(),
                            })
                            .collect(),
                    }
                })
                .collect();
            let pool = CorrectionPool::from_entries(entries, 0);
            let mut trace = SimulationTrace {
                doc_id: test.doc.doc_id.clone(),
                pool_doc_ids: pool.entries().iter().map(|e| e.doc_id.clone()).collect(),
                example_doc_ids: Vec::new(),
                error: None,
            };
            let rows = match generate_records(&test.doc, &dataset.schema, &pool, llm, &gen_cfg) {
                Ok(sets) => {
                    trace.example_doc_ids = sets.example_doc_ids.clone();
                    match align_dual(&sets, &dataset.schema, &embedder, DEFAULT_SUGGEST_THRESHOLD) {
                        Ok(merged) => merged.into_iter().map(|m| m.values).collect(),
                        Err(e) => {
                            trace.error = Some(e.to_string());
                            Vec::new()
                        }
                    }
                }
                Err(e) => {
                    log::warn!("{}: {e}", test.doc.doc_id);
                    trace.error = Some(e.to_string());
                    Vec::new()
                }
            };
            (rows, trace)
        })
        .collect();

    let mut table = TableDump::new(&dataset.schema);
    let mut traces = Vec::with_capacity(n);
    for (t, (rows, trace)) in results.into_iter().enumerate() {
        table.push_document(&dataset.documents[t].doc.doc_id, &rows);
        traces.push(trace);
    }
    SimulationOutput { table, trace: traces }
}
