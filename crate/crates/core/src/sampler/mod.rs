//! Correction pool, BM25 retrieval of in-context examples, and the
//! leave-one-out workflow simulation.

mod bm25;
mod simulate;

use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::generator::{Record, RecordStatus, Row};

pub use bm25::{tokenize, Bm25Index, Bm25Params, DefaultTokenizer, Tokenizer};
pub use simulate::{
    sample_pool, simulate_hatdc, Dataset, DatasetDocument, DatasetError, SimulationConfig, SimulationOutput, SimulationTrace,
};

/// Shots used when none are configured.
pub const DEFAULT_SHOTS: usize = 1;

#[derive(Debug, thiserror::Error)]
pub enum SamplerError {
    #[error("cannot build an index over an empty corpus")]
    EmptyCorpus,
    #[error("unknown document {0}")]
    UnknownDoc(String),
    #[error("duplicate document id {0}")]
    DuplicateDoc(String),
    #[error("record {0} is not locked")]
    NotLocked(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolRecord {
    pub record_id: String,
    pub values: Row,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub doc_id: String,
    pub text: String,
    pub records: Vec<PoolRecord>,
}

/// Human-verified records grouped by source document.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrectionPool {
    entries: Vec<PoolEntry>,
    version: u64,
}

impl CorrectionPool {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build a pool directly from entries (used by the simulator, where gold
    /// records stand in for corrections).
    pub fn from_entries(entries: Vec<PoolEntry>, version: u64) -> Self {
        CorrectionPool { entries, version }
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains_record(&self, record_id: &str) -> bool {
        self.entries
            .iter()
            .any(|e| e.records.iter().any(|r| r.record_id == record_id))
    }

    /// Add a locked record under its document, creating the entry if needed.
    pub fn insert_locked(&mut self, doc_text: &str, record: &Record) -> Result<(), SamplerError> {
        if record.status != RecordStatus::Locked {
            return Err(SamplerError::NotLocked(record.record_id.clone()));
        }
        let pr = PoolRecord {
            record_id: record.record_id.clone(),
            values: record.values(),
        };
        match self.entries.iter_mut().find(|e| e.doc_id == record.doc_id) {
            Some(entry) => {
                entry.records.retain(|r| r.record_id != pr.record_id);
                entry.records.push(pr);
            }
            None => self.entries.push(PoolEntry {
                doc_id: record.doc_id.clone(),
                text: doc_text.to_string(),
                records: vec![pr],
            }),
        }
        self.version += 1;
        Ok(())
    }

    /// Rewrite every pooled record, e.g. after a schema change.
    pub fn map_rows(&mut self, mut f: impl FnMut(&Row) -> Row) {
        for e in &mut self.entries {
            for r in &mut e.records {
                r.values = f(&r.values);
            }
        }
        self.version += 1;
    }

    /// Drop a record; entries left without records are removed.
    pub fn remove_record(&mut self, record_id: &str) -> bool {
        let mut removed = false;
        for e in &mut self.entries {
            let before = e.records.len();
            e.records.retain(|r| r.record_id != record_id);
            removed |= e.records.len() != before;
        }
        self.entries.retain(|e| !e.records.is_empty());
        if removed {
            self.version += 1;
        }
        removed
    }
}

/// Single-writer, many-reader pool. Readers take immutable snapshots that
/// later writes never touch.
#[derive(Debug, Default)]
pub struct SharedPool {
    inner: RwLock<Arc<CorrectionPool>>,
}

impl SharedPool {
    pub fn new(pool: CorrectionPool) -> Self {
        SharedPool {
            inner: RwLock::new(Arc::new(pool)),
        }
    }

    pub fn snapshot(&self) -> Arc<CorrectionPool> {
        Arc::clone(&self.inner.read().expect("pool lock poisoned"))
    }

    pub fn update<T>(&self, f: impl FnOnce(&mut CorrectionPool) -> T) -> T {
        let mut guard = self.inner.write().expect("pool lock poisoned");
        let mut next = CorrectionPool::clone(&guard);
        let out = f(&mut next);
        *guard = Arc::new(next);
        out
    }
}

/// A retrieved demonstration: a pool document and its verified records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IclExample {
    pub doc_id: String,
    pub source_doc_excerpt: String,
    pub records: Vec<Row>,
    pub score: f64,
}

/// Rank pool documents against the target text and return the top `m`.
///
/// Scores are non-increasing; equal scores are ordered by ascending doc id.
/// An empty pool yields no examples.
pub fn select_icl_examples(
    target_text: &str,
    pool: &CorrectionPool,
    m: usize,
    params: Bm25Params,
) -> Vec<IclExample> {
    if pool.is_empty() || m == 0 {
        return Vec::new();
    }
    let corpus: Vec<(&str, &str)> = pool
        .entries()
        .iter()
        .map(|e| (e.doc_id.as_str(), e.text.as_str()))
        .collect();
    let index = match Bm25Index::build(&corpus, &DefaultTokenizer, params) {
        Ok(i) => i,
        Err(e) => {
            log::error!("pool index build failed: {e}");
            return Vec::new();
        }
    };
    let query = tokenize(target_text);
    index
        .rank(&query)
        .into_iter()
        .take(m)
        .filter_map(|(doc_id, score)| {
            let entry = pool.entries().iter().find(|e| e.doc_id == doc_id)?;
            Some(IclExample {
                doc_id: entry.doc_id.clone(),
                source_doc_excerpt: entry.text.clone(),
                records: entry.records.iter().map(|r| r.values.clone()).collect(),
                score,
            })
        })
        .collect()
}
