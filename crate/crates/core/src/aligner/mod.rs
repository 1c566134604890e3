//! Pairing the record sets of the two parser variants by embedding cosine
//! similarity and maximum-weight assignment.

mod embedding;
mod hungarian;

use serde::{Deserialize, Serialize};

use crate::generator::{Alternative, DualRecordSets, Origin, Row, Schema};
use crate::ingest::ParserKind;

pub use embedding::{EmbedError, EmbeddingProvider, HashingEmbedder, HttpEmbedder, HASHING_DIM};
pub use hungarian::{hungarian_max, Assignment, SimilarityMatrix};

pub const DEFAULT_SUGGEST_THRESHOLD: f64 = 0.5;

/// `col: value` pairs in schema order joined by `"; "`, skipping empty cells.
pub fn serialize_record(row: &Row, schema: &Schema) -> String {
    schema
        .names()
        .filter_map(|n| {
            let v = row.get(n)?;
            (!v.is_empty()).then(|| format!("{n}: {v}"))
        })
        .collect::<Vec<_>>()
        .join("; ")
}

/// Cosine similarity; 0 when either vector is all zeros.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    assert_eq!(u.len(), v.len(), "cosine of vectors with different dims");
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| b * b).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        log::debug!("cosine with a zero vector, defined as 0");
        return 0.0;
    }
    (dot / (nu * nv)).clamp(-1.0, 1.0)
}

pub fn similarity_matrix(
    set_a: &[Row],
    set_b: &[Row],
    schema: &Schema,
    provider: &dyn EmbeddingProvider,
) -> Result<SimilarityMatrix, EmbedError> {
    let texts = |rows: &[Row]| rows.iter().map(|r| serialize_record(r, schema)).collect::<Vec<_>>();
    let ea = provider.embed_batch(&texts(set_a))?;
    let eb = provider.embed_batch(&texts(set_b))?;
    Ok(SimilarityMatrix::from_fn(set_a.len(), set_b.len(), |i, j| cosine(&ea[i], &eb[j])))
}

/// A record suggested to the curator, optionally carrying the other
/// pipeline's aligned record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergedRecord {
    pub values: Row,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternative: Option<Alternative>,
}

/// Align two record sets of one document.
///
/// Pairs scoring at or above `suggest_threshold` become one record with
/// origin `Merged`, keeping `set_a`'s values as primary and `set_b`'s as the
/// alternative. Everything else passes through unchanged: first `set_a` in
/// order, then the remaining `set_b` records in order.
pub fn align_record_sets(
    set_a: (&[Row], Origin),
    set_b: (&[Row], Origin),
    schema: &Schema,
    provider: &dyn EmbeddingProvider,
    suggest_threshold: f64,
) -> Result<Vec<MergedRecord>, EmbedError> {
    let (rows_a, origin_a) = set_a;
    let (rows_b, origin_b) = set_b;
    let matrix = similarity_matrix(rows_a, rows_b, schema, provider)?;
    let assignment = hungarian_max(&matrix);

    let mut partner: Vec<Option<(usize, f64)>> = vec![None; rows_a.len()];
    let mut b_taken = vec![false; rows_b.len()];
    for &(i, j, score) in &assignment.pairs {
        if score >= suggest_threshold {
            partner[i] = Some((j, score));
            b_taken[j] = true;
        }
    }

    let mut out = Vec::with_capacity(rows_a.len() + rows_b.len());
    for (i, row) in rows_a.iter().enumerate() {
        out.push(match partner[i] {
            Some((j, score)) => MergedRecord {
                values: row.clone(),
                origin: Origin::Merged,
                alternative: Some(Alternative {
                    origin: origin_b,
                    values: rows_b[j].clone(),
                    score,
                }),
            },
            None => MergedRecord {
                values: row.clone(),
                origin: origin_a,
                alternative: None,
            },
        });
    }
    out.extend(rows_b.iter().zip(&b_taken).filter(|(_, &t)| !t).map(|(row, _)| MergedRecord {
        values: row.clone(),
        origin: origin_b,
        alternative: None,
    }));
    Ok(out)
}

/// Align the per-variant sets of a generation result. The structured
/// variant is primary; a single set passes through.
pub fn align_dual(
    sets: &DualRecordSets,
    schema: &Schema,
    provider: &dyn EmbeddingProvider,
    suggest_threshold: f64,
) -> Result<Vec<MergedRecord>, EmbedError> {
    match (sets.get(ParserKind::StructuredTei), sets.get(ParserKind::GenericText)) {
        (Some(a), Some(b)) => align_record_sets(
            (&a.rows, a.origin),
            (&b.rows, b.origin),
            schema,
            provider,
            suggest_threshold,
        ),
        (Some(only), None) | (None, Some(only)) => Ok(only
            .rows
            .iter()
            .map(|r| MergedRecord {
                values: r.clone(),
                origin: only.origin,
                alternative: None,
            })
            .collect()),
        (None, None) => Ok(Vec::new()),
    }
}
