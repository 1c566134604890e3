use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::prompt::{build_prompt, parse_llm_output, JSON_ONLY_REMINDER};
use super::{GenerateError, LlmProvider, Origin, Row, Schema};
use crate::ingest::{chunk_text, ChunkConfig, ParsedDocument, ParserKind, VariantFailure, DEFAULT_OVERLAP};
use crate::sampler::{select_icl_examples, Bm25Params, CorrectionPool, IclExample, DEFAULT_SHOTS};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Number of retrieved demonstrations per prompt.
    pub shots: usize,
    pub overlap_fraction: f64,
    /// Share of the context reserved for instructions and demonstrations.
    pub prompt_overhead: f64,
    pub bm25: Bm25Params,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            shots: DEFAULT_SHOTS,
            overlap_fraction: DEFAULT_OVERLAP,
            prompt_overhead: 0.20,
            bm25: Bm25Params::default(),
        }
    }
}

impl GenerationConfig {
    /// Characters of article text per prompt.
    pub fn article_window(&self, context_chars: usize) -> usize {
        ((context_chars as f64 * (1.0 - self.prompt_overhead)).floor() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantRecords {
    pub kind: ParserKind,
    pub origin: Origin,
    pub rows: Vec<Row>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualRecordSets {
    pub doc_id: String,
    pub sets: Vec<VariantRecords>,
    pub failures: Vec<VariantFailure>,
    /// Pool documents used as demonstrations, best first.
    pub example_doc_ids: Vec<String>,
}

impl DualRecordSets {
    pub fn get(&self, kind: ParserKind) -> Option<&VariantRecords> {
        self.sets.iter().find(|s| s.kind == kind)
    }
}

/// Trim demonstration excerpts so instructions plus demonstrations fit in
/// the reserved share of the context.
fn fit_examples(schema: &Schema, examples: &[IclExample], context_chars: usize, cfg: &GenerationConfig) -> Vec<IclExample> {
    if examples.is_empty() {
        return Vec::new();
    }
    let reserved = context_chars.saturating_sub(cfg.article_window(context_chars));
    let mut fitted: Vec<IclExample> = examples
        .iter()
        .map(|e| IclExample {
            source_doc_excerpt: String::new(),
            ..e.clone()
        })
        .collect();
    let base = build_prompt(schema, "", &fitted)
        .map(|p| p.chars().count())
        .unwrap_or(0);
    let per_example = reserved.saturating_sub(base) / examples.len();
    for (f, e) in fitted.iter_mut().zip(examples) {
        f.source_doc_excerpt = e.source_doc_excerpt.chars().take(per_example).collect();
    }
    fitted
}

fn complete_and_parse(llm: &dyn LlmProvider, prompt: &str, schema: &Schema) -> Result<Vec<Row>, GenerateError> {
    let raw = llm.complete(prompt)?;
    match parse_llm_output(&raw, schema) {
        Ok(rows) => Ok(rows),
        Err(GenerateError::OutputUnparseable { raw }) => {
            log::warn!("unparseable LLM output, retrying once: {:.120}", raw);
            let retry = format!("{prompt}\n{JSON_ONLY_REMINDER}\n");
            parse_llm_output(&llm.complete(&retry)?, schema)
        }
        Err(e) => Err(e),
    }
}

/// Chunk `text`, prompt once per chunk, and concatenate the parsed rows in
/// chunk order. Blank rows are dropped and exact duplicates keep their first
/// occurrence.
pub fn extract_from_text(
    text: &str,
    schema: &Schema,
    examples: &[IclExample],
    llm: &dyn LlmProvider,
    cfg: &GenerationConfig,
) -> Result<Vec<Row>, GenerateError> {
    let context = llm.context_chars();
    let chunks = chunk_text(
        text,
        &ChunkConfig {
            window_chars: cfg.article_window(context),
            overlap_fraction: cfg.overlap_fraction,
        },
    )?;
    let examples = fit_examples(schema, examples, context, cfg);

    let mut seen = HashSet::new();
    let mut rows = Vec::new();
    for chunk in chunks {
        let prompt = build_prompt(schema, &chunk.text, &examples)?;
        for row in complete_and_parse(llm, &prompt, schema)? {
            if !row.is_blank() && seen.insert(row.canonical()) {
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

/// Generate one record set per available variant. Demonstrations are
/// retrieved once per document, using the preferred variant as the query.
pub fn generate_records(
    doc: &ParsedDocument,
    schema: &Schema,
    pool: &CorrectionPool,
    llm: &dyn LlmProvider,
    cfg: &GenerationConfig,
) -> Result<DualRecordSets, GenerateError> {
    if doc.is_failed() {
        return Err(GenerateError::NoVariants {
            doc_id: doc.doc_id.clone(),
        });
    }
    let examples = select_icl_examples(&doc.query_text(), pool, cfg.shots, cfg.bm25);
    let mut out = DualRecordSets {
        doc_id: doc.doc_id.clone(),
        sets: Vec::new(),
        failures: Vec::new(),
        example_doc_ids: examples.iter().map(|e| e.doc_id.clone()).collect(),
    };
    for &kind in doc.variants.keys() {
        let text = doc.prompt_text(kind).expect("variant present");
        match extract_from_text(&text, schema, &examples, llm, cfg) {
            Ok(rows) => out.sets.push(VariantRecords {
                kind,
                origin: kind.into(),
                rows,
            }),
            Err(e) => {
                log::warn!("{}: {kind} generation failed: {e}", doc.doc_id);
                out.failures.push(VariantFailure {
                    kind,
                    reason: e.to_string(),
                });
            }
        }
    }
    if out.sets.is_empty() {
        return Err(GenerateError::GenerationFailed {
            doc_id: doc.doc_id.clone(),
            reasons: out.failures.into_iter().map(|f| f.reason).collect(),
        });
    }
    Ok(out)
}
