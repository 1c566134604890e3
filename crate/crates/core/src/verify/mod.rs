//! Cell provenance grading, supporting-paragraph retrieval and explanation
//! prompts.

mod fuzzy;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::generator::Schema;
use crate::ingest::{Paragraph, ParsedDocument, ParserKind, Span};
use crate::sampler::{tokenize, Bm25Index, Bm25Params, DefaultTokenizer};

pub use fuzzy::{normalize, Normalized, MAX_COMPARISONS};

pub const DEFAULT_TOP_K: usize = 3;
pub const BOLD: &str = "**";
/// Leading words of every explanation prompt.
pub const EXPLANATION_PREFIX: &str = "Please find the relevant paragraph";

#[derive(Debug, thiserror::Error)]
pub enum VerifyError {
    #[error("attribute {0:?} is not in the schema")]
    UnknownAttribute(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Band {
    Unsupported,
    Partial,
    Supported,
}

/// Ratio thresholds for the provenance bands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bands {
    pub supported: u8,
    pub partial: u8,
}

impl Default for Bands {
    fn default() -> Self {
        Bands {
            supported: 90,
            partial: 60,
        }
    }
}

impl Bands {
    pub fn classify(&self, ratio: u8) -> Band {
        if ratio >= self.supported {
            Band::Supported
        } else if ratio >= self.partial {
            Band::Partial
        } else {
            Band::Unsupported
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchGrade {
    pub ratio: u8,
    pub band: Band,
    /// Character span in the text of `source`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub best_span: Option<Span>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<ParserKind>,
}

/// Best-window partial ratio in `0..=100`, after case folding and
/// whitespace collapsing. An empty needle scores 0.
pub fn fuzzy_ratio(needle: &str, haystack: &str) -> u8 {
    fuzzy::best_window(&normalize(needle).chars, &normalize(haystack).chars).map_or(0, |m| m.ratio)
}

/// Ratio and matched span (in `haystack` characters).
pub fn fuzzy_match(needle: &str, haystack: &str) -> (u8, Option<Span>) {
    let hay = normalize(haystack);
    match fuzzy::best_window(&normalize(needle).chars, &hay.chars) {
        Some(m) if m.ratio > 0 => (m.ratio, m.source_span(&hay)),
        Some(m) => (m.ratio, None),
        None => (0, None),
    }
}

/// Grade a cell value against every variant of the document. The host
/// variant is checked with its merged tables. Ties go to the preferred
/// variant.
pub fn provenance_check(cell_value: &str, doc: &ParsedDocument, bands: Bands) -> MatchGrade {
    let mut best = MatchGrade {
        ratio: 0,
        band: bands.classify(0),
        best_span: None,
        source: None,
    };
    if cell_value.trim().is_empty() {
        return best;
    }
    for &kind in doc.variants.keys() {
        let Some(text) = doc.prompt_text(kind) else { continue };
        let (ratio, span) = fuzzy_match(cell_value, &text);
        if ratio > best.ratio {
            best = MatchGrade {
                ratio,
                band: bands.classify(ratio),
                best_span: span,
                source: Some(kind),
            };
        }
        if best.ratio == 100 {
            break;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredParagraph {
    pub paragraph: Paragraph,
    pub score: f64,
    /// Paragraph text with matched query tokens wrapped in `**`.
    pub highlighted: String,
}

/// Remove the bold markers inserted by [`highlight`].
pub fn strip_bold(text: &str) -> String {
    text.replace(BOLD, "")
}

/// Wrap every token of `text` that belongs to `terms` in bold markers.
/// Tokens are maximal alphanumeric runs compared in lowercase.
pub fn highlight(text: &str, terms: &HashSet<String>) -> String {
    let mut out = String::with_capacity(text.len() + 16);
    let mut run_start: Option<usize> = None;
    let flush = |out: &mut String, run: &str| {
        if terms.contains(&run.to_lowercase()) {
            out.push_str(BOLD);
            out.push_str(run);
            out.push_str(BOLD);
        } else {
            out.push_str(run);
        }
    };
    for (i, c) in text.char_indices() {
        if c.is_alphanumeric() {
            run_start.get_or_insert(i);
        } else {
            if let Some(s) = run_start.take() {
                flush(&mut out, &text[s..i]);
            }
            out.push(c);
        }
    }
    if let Some(s) = run_start {
        flush(&mut out, &text[s..]);
    }
    out
}

/// BM25-rank the preferred variant's paragraphs against the concatenated
/// cell values. Scores are non-increasing; ties keep paragraph order.
pub fn supporting_paragraphs(
    query_cell_values: &[&str],
    doc: &ParsedDocument,
    top_k: usize,
    params: Bm25Params,
) -> Vec<ScoredParagraph> {
    let Some(variant) = doc.preferred_variant() else {
        return Vec::new();
    };
    if variant.paragraphs.is_empty() || top_k == 0 {
        return Vec::new();
    }
    let width = variant.paragraphs.len().to_string().len();
    let corpus: Vec<(String, &str)> = variant
        .paragraphs
        .iter()
        .map(|p| (format!("{:0width$}", p.index), p.text.as_str()))
        .collect();
    let index = Bm25Index::build(&corpus, &DefaultTokenizer, params).expect("non-empty corpus with unique ids");
    let query = tokenize(&query_cell_values.join(" "));
    let terms: HashSet<String> = query.iter().cloned().collect();
    index
        .rank(&query)
        .into_iter()
        .take(top_k)
        .map(|(id, score)| {
            let p = &variant.paragraphs[id.parse::<usize>().expect("numeric id")];
            ScoredParagraph {
                paragraph: p.clone(),
                score,
                highlighted: highlight(&p.text, &terms),
            }
        })
        .collect()
}

/// The explanation request for one cell.
pub fn build_explanation_prompt(
    schema: &Schema,
    attribute: &str,
    value: &str,
    article_text: &str,
) -> Result<String, VerifyError> {
    if !schema.contains(attribute) {
        return Err(VerifyError::UnknownAttribute(attribute.to_string()));
    }
    Ok(format!(
        "{EXPLANATION_PREFIX} that shows that the {attribute} is {value} from given article.\n\n\
         [Given Article Start]\n{article_text}\n[Given Article End]\n"
    ))
}
