//! Record-aligned precision, recall, F1 and ChrF between predicted and gold
//! tables.

mod chrf;
mod dump;

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::aligner::{hungarian_max, serialize_record, Assignment, SimilarityMatrix};
use crate::generator::{Row, Schema};

pub use chrf::{chrf, chrf_with, ngram_stats, DEFAULT_BETA, DEFAULT_CHAR_ORDER};
pub use dump::{DumpDocument, TableDump};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("malformed table dump: {0}")]
    MalformedDump(String),
    #[error("schemas differ: predicted {pred:?}, gold {gold:?}")]
    SchemaMismatch { pred: Vec<String>, gold: Vec<String> },
    #[error("predicted documents absent from gold: {0:?}")]
    DocIdMismatch(Vec<String>),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalOptions {
    /// Compare cells case-sensitively.
    pub exact_case: bool,
}

/// NFC, trim, collapse internal whitespace and (unless `exact_case`)
/// lowercase. Numbers are compared as text.
pub fn normalize_cell(value: &str, exact_case: bool) -> String {
    let nfc: String = value.nfc().collect();
    let collapsed = nfc.split_whitespace().collect::<Vec<_>>().join(" ");
    if exact_case {
        collapsed
    } else {
        collapsed.to_lowercase()
    }
}

fn normalized_rows(rows: &[Row], schema: &Schema, exact_case: bool) -> Vec<Row> {
    rows.iter()
        .map(|r| {
            Row::from_pairs(
                schema,
                schema
                    .names()
                    .map(|c| (c, normalize_cell(r.get(c).unwrap_or_default(), exact_case))),
            )
        })
        .filter(|r| !r.is_blank())
        .collect()
}

/// Cells that are non-empty on both sides and equal.
fn matching_cells(a: &Row, b: &Row, schema: &Schema) -> usize {
    schema
        .names()
        .filter(|c| {
            let x = a.get(c).unwrap_or_default();
            !x.is_empty() && Some(x) == b.get(c)
        })
        .count()
}

fn filled_cells(rows: &[Row]) -> usize {
    rows.iter().map(|r| r.iter().filter(|(_, v)| !v.is_empty()).count()).sum()
}

/// Optimal pairing of (already normalized) predicted and gold records by
/// the number of exactly matching cells.
pub fn align_for_eval(pred: &[Row], gold: &[Row], schema: &Schema) -> Assignment {
    let m = SimilarityMatrix::from_fn(pred.len(), gold.len(), |i, j| {
        matching_cells(&pred[i], &gold[j], schema) as f64
    });
    hungarian_max(&m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Prf {
    /// From cell counts, on the 0–100 scale. Zero denominators give 0.
    pub fn from_counts(correct: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(correct, predicted);
        let r = ratio(correct, gold);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        Prf {
            precision: 100.0 * p,
            recall: 100.0 * r,
            f1: 100.0 * f1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentScore {
    pub doc_id: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Absent when neither side has records.
    pub chrf: Option<f64>,
    pub predicted_records: usize,
    pub gold_records: usize,
    pub predicted_cells: usize,
    pub gold_cells: usize,
    pub correct_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub chrf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub documents: usize,
    pub predicted_records: usize,
    pub gold_records: usize,
    pub predicted_cells: usize,
    pub gold_cells: usize,
    pub correct_cells: usize,
}

/// All values on the 0–100 scale; P/R/F1 are micro-averaged over cells,
/// ChrF is the mean over documents that have records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub aggregate: Aggregate,
    pub counts: Counts,
    pub documents: Vec<DocumentScore>,
}

impl EvalReport {
    pub fn summary_line(&self, label: &str) -> String {
        format!(
            "{label}\tP={:.2}\tR={:.2}\tF1={:.2}\tChrF={:.2}",
            self.aggregate.precision, self.aggregate.recall, self.aggregate.f1, self.aggregate.chrf
        )
    }
}

/// Score one document's predicted records against its gold records.
pub fn score_document(doc_id: &str, pred: &[Row], gold: &[Row], schema: &Schema, opts: EvalOptions) -> DocumentScore {
    let pred = normalized_rows(pred, schema, opts.exact_case);
    let gold = normalized_rows(gold, schema, opts.exact_case);
    let assignment = align_for_eval(&pred, &gold, schema);
    let correct: usize = assignment
        .pairs
        .iter()
        .map(|&(i, j, _)| matching_cells(&pred[i], &gold[j], schema))
        .sum();
    let (pc, gc) = (filled_cells(&pred), filled_cells(&gold));
    let prf = Prf::from_counts(correct, pc, gc);
    let slots = pred.len().max(gold.len());
    let chrf = (slots > 0).then(|| {
        let total: f64 = assignment
            .pairs
            .iter()
            .map(|&(i, j, _)| chrf::chrf(&serialize_record(&pred[i], schema), &serialize_record(&gold[j], schema)))
            .sum();
        total / slots as f64
    });
    DocumentScore {
        doc_id: doc_id.to_string(),
        precision: prf.precision,
        recall: prf.recall,
        f1: prf.f1,
        chrf,
        predicted_records: pred.len(),
        gold_records: gold.len(),
        predicted_cells: pc,
        gold_cells: gc,
        correct_cells: correct,
    }
}

/// Evaluate a predicted dump against gold. Gold documents missing from the
/// prediction count as empty predictions.
pub fn evaluate_dataset(pred: &TableDump, gold: &TableDump, opts: EvalOptions) -> Result<EvalReport, EvalError> {
    pred.validate()?;
    gold.validate()?;
    let ps: BTreeSet<&str> = pred.schema.iter().map(String::as_str).collect();
    let gs: BTreeSet<&str> = gold.schema.iter().map(String::as_str).collect();
    if ps != gs {
        return Err(EvalError::SchemaMismatch {
            pred: pred.schema.clone(),
            gold: gold.schema.clone(),
        });
    }
    let schema = gold.schema()?;
    let pred_docs: HashMap<&str, &DumpDocument> = pred.documents.iter().map(|d| (d.doc_id.as_str(), d)).collect();
    let gold_ids: BTreeSet<&str> = gold.documents.iter().map(|d| d.doc_id.as_str()).collect();
    let unknown: Vec<String> = pred
        .documents
        .iter()
        .filter(|d| !gold_ids.contains(d.doc_id.as_str()))
        .map(|d| d.doc_id.clone())
        .collect();
    if !unknown.is_empty() {
        return Err(EvalError::DocIdMismatch(unknown));
    }

    let documents: Vec<DocumentScore> = gold
        .documents
        .par_iter()
        .map(|g| {
            let p = pred_docs.get(g.doc_id.as_str()).map(|d| pred.rows(d)).unwrap_or_default();
            score_document(&g.doc_id, &p, &gold.rows(g), &schema, opts)
        })
        .collect();

    let sum = |f: fn(&DocumentScore) -> usize| documents.iter().map(f).sum::<usize>();
    let counts = Counts {
        documents: documents.len(),
        predicted_records: sum(|d| d.predicted_records),
        gold_records: sum(|d| d.gold_records),
        predicted_cells: sum(|d| d.predicted_cells),
        gold_cells: sum(|d| d.gold_cells),
        correct_cells: sum(|d| d.correct_cells),
    };
    let prf = Prf::from_counts(counts.correct_cells, counts.predicted_cells, counts.gold_cells);
    let chrfs: Vec<f64> = documents.iter().filter_map(|d| d.chrf).collect();
    let chrf = if chrfs.is_empty() {
        0.0
    } else {
        chrfs.iter().sum::<f64>() / chrfs.len() as f64
    };
    Ok(EvalReport {
        aggregate: Aggregate {
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            chrf,
        },
        counts,
        documents,
    })
}

/// Micro-averaged P/R/F1 of two dumps.
pub fn record_prf(pred: &TableDump, gold: &TableDump, opts: EvalOptions) -> Result<Prf, EvalError> {
    let a = evaluate_dataset(pred, gold, opts)?.aggregate;
    Ok(Prf {
        precision: a.precision,
        recall: a.recall,
        f1: a.f1,
    })
}
