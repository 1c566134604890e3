//! Document preprocessing: routing, parsing into text variants, table
//! rendering and merging, and sliding-window chunking.
//!
//! All offsets in this module (paragraph spans, table anchors, chunk spans)
//! count Unicode scalar values, not bytes.

mod chunk;
mod html_table;
mod ocr;
mod service;
mod tei;

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use chunk::{chunk_text, ChunkConfig, TextChunk, DEFAULT_OVERLAP};
pub use html_table::html_table_to_markdown;
pub use ocr::OcrCommand;
pub use service::{HttpParserService, OfflineParserService, ParserService};
pub use tei::{segment_plain_text, tei_paragraphs};

/// Separator placed between paragraphs of a variant's text.
pub const PARAGRAPH_SEPARATOR: &str = "\n\n";

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("unreadable source: {0}")]
    UnreadableSource(String),
    #[error("parser service unavailable for {kind}: {reason}")]
    ServiceUnavailable { kind: ParserKind, reason: String },
    #[error("{kind} produced no text")]
    EmptyExtraction { kind: ParserKind },
    #[error("malformed table: {0}")]
    MalformedTable(String),
    #[error("invalid chunking config: {0}")]
    InvalidConfig(String),
    #[error("ocr failed: {0}")]
    Ocr(String),
}

/// Which parsing pipeline produced a text variant.
///
/// The declaration order is the preference order: structured output first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ParserKind {
    /// Scholarly structured parser returning TEI XML.
    StructuredTei,
    /// Generic content extractor returning plain text.
    GenericText,
}

impl ParserKind {
    pub const ALL: [ParserKind; 2] = [ParserKind::StructuredTei, ParserKind::GenericText];

    pub fn as_str(self) -> &'static str {
        match self {
            ParserKind::StructuredTei => "STRUCTURED_TEI",
            ParserKind::GenericText => "GENERIC_TEXT",
        }
    }
}

impl fmt::Display for ParserKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Half-open range of character offsets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }
}

/// Slice `text` by a character span. Out-of-range ends are clamped.
pub fn char_slice(text: &str, span: Span) -> &str {
    let start = byte_offset(text, span.start);
    let end = byte_offset(text, span.end);
    &text[start..end.max(start)]
}

/// Byte offset of the `chars`-th character, or `text.len()` past the end.
pub(crate) fn byte_offset(text: &str, chars: usize) -> usize {
    text.char_indices()
        .nth(chars)
        .map(|(b, _)| b)
        .unwrap_or(text.len())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub index: usize,
    pub text: String,
    pub char_span: Span,
}

/// Text produced by one parser, with its paragraph segmentation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub text: String,
    pub paragraphs: Vec<Paragraph>,
}

impl Variant {
    /// Join paragraphs with [`PARAGRAPH_SEPARATOR`], dropping blank ones.
    pub fn from_paragraphs<I, S>(paragraphs: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut text = String::new();
        let mut out = Vec::new();
        let mut offset = 0;
        let sep_chars = PARAGRAPH_SEPARATOR.chars().count();
        for p in paragraphs {
            let p = p.as_ref().trim();
            if p.is_empty() {
                continue;
            }
            if !out.is_empty() {
                text.push_str(PARAGRAPH_SEPARATOR);
                offset += sep_chars;
            }
            let len = p.chars().count();
            text.push_str(p);
            out.push(Paragraph {
                index: out.len(),
                text: p.to_string(),
                char_span: Span::new(offset, offset + len),
            });
            offset += len;
        }
        Variant {
            text,
            paragraphs: out,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.paragraphs.is_empty()
    }
}

/// A table rendered as a markdown pipe table, anchored into the host
/// variant's text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableBlock {
    pub markdown: String,
    #[serde(default)]
    pub caption: String,
    pub anchor_char_offset: usize,
}

impl TableBlock {
    fn rendered(&self) -> String {
        if self.caption.trim().is_empty() {
            self.markdown.clone()
        } else {
            format!("{}\n{}", self.caption.trim(), self.markdown)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantFailure {
    pub kind: ParserKind,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedDocument {
    pub doc_id: String,
    pub source_uri: String,
    pub variants: BTreeMap<ParserKind, Variant>,
    /// Sorted by ascending anchor.
    #[serde(default)]
    pub tables: Vec<TableBlock>,
    #[serde(default)]
    pub ocr_applied: bool,
    #[serde(default)]
    pub failures: Vec<VariantFailure>,
}

impl ParsedDocument {
    pub fn new(doc_id: impl Into<String>, source_uri: impl Into<String>) -> Self {
        ParsedDocument {
            doc_id: doc_id.into(),
            source_uri: source_uri.into(),
            variants: BTreeMap::new(),
            tables: Vec::new(),
            ocr_applied: false,
            failures: Vec::new(),
        }
    }

    /// Convenience constructor for a document known only as plain text.
    pub fn from_plain_text(doc_id: impl Into<String>, text: &str) -> Self {
        let mut doc = ParsedDocument::new(doc_id, "");
        doc.variants
            .insert(ParserKind::GenericText, Variant::from_paragraphs(segment_plain_text(text)));
        doc
    }

    /// A document with no usable variant.
    pub fn is_failed(&self) -> bool {
        self.variants.is_empty()
    }

    /// The preferred available variant (structured output first).
    pub fn preferred_kind(&self) -> Option<ParserKind> {
        self.variants.keys().next().copied()
    }

    pub fn preferred_variant(&self) -> Option<&Variant> {
        self.variants.values().next()
    }

    /// Set tables, keeping them sorted by anchor.
    pub fn set_tables(&mut self, mut tables: Vec<TableBlock>) {
        sort_tables(&mut tables);
        self.tables = tables;
    }

    /// Text used for prompting and provenance: the host (preferred)
    /// variant gets the tables merged in; other variants are returned as is.
    pub fn prompt_text(&self, kind: ParserKind) -> Option<Cow<'_, str>> {
        let variant = self.variants.get(&kind)?;
        if Some(kind) == self.preferred_kind() && !self.tables.is_empty() {
            Some(Cow::Owned(merge_tables(&variant.text, &self.tables)))
        } else {
            Some(Cow::Borrowed(&variant.text))
        }
    }

    /// Retrieval query text: the preferred variant with tables merged.
    pub fn query_text(&self) -> String {
        self.preferred_kind()
            .and_then(|k| self.prompt_text(k))
            .map(Cow::into_owned)
            .unwrap_or_default()
    }

    pub fn chunks(&self, kind: ParserKind, cfg: &ChunkConfig) -> Result<Vec<Chunk>, IngestError> {
        let Some(text) = self.prompt_text(kind) else {
            return Ok(Vec::new());
        };
        Ok(chunk_text(&text, cfg)?
            .into_iter()
            .map(|c| Chunk {
                doc_id: self.doc_id.clone(),
                variant: kind,
                span: c.span,
                text: c.text,
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Chunk {
    pub doc_id: String,
    pub variant: ParserKind,
    pub span: Span,
    pub text: String,
}

/// Outcome of probing a source for a machine-readable text layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TextLayerProbe {
    HasText,
    ImagesOnly,
    Failed(String),
}

/// Inspect raw source bytes.
///
/// PDFs count as having a text layer when they reference a font resource.
/// Non-PDF sources (TEI XML, plain text) must be valid UTF-8.
pub fn probe_source(raw: &[u8]) -> TextLayerProbe {
    if raw.is_empty() {
        return TextLayerProbe::Failed("zero-byte source".into());
    }
    if raw.starts_with(b"%PDF") {
        if contains(raw, b"/Font") {
            TextLayerProbe::HasText
        } else {
            TextLayerProbe::ImagesOnly
        }
    } else if std::str::from_utf8(raw).is_ok() {
        TextLayerProbe::HasText
    } else {
        TextLayerProbe::Failed("unrecognized binary source".into())
    }
}

fn contains(haystack: &[u8], needle: &[u8]) -> bool {
    haystack.windows(needle.len()).any(|w| w == needle)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IngestPlan {
    pub ocr: bool,
    pub parsers: Vec<ParserKind>,
}

pub fn route_document(probe: &TextLayerProbe) -> Result<IngestPlan, IngestError> {
    let ocr = match probe {
        TextLayerProbe::HasText => false,
        TextLayerProbe::ImagesOnly => true,
        TextLayerProbe::Failed(reason) => return Err(IngestError::UnreadableSource(reason.clone())),
    };
    Ok(IngestPlan {
        ocr,
        parsers: ParserKind::ALL.to_vec(),
    })
}

pub fn parse_variant(
    raw: &[u8],
    kind: ParserKind,
    service: &dyn ParserService,
) -> Result<Variant, IngestError> {
    let paragraphs = service.extract(raw, kind)?;
    let variant = Variant::from_paragraphs(paragraphs);
    if variant.is_empty() {
        return Err(IngestError::EmptyExtraction { kind });
    }
    Ok(variant)
}

/// A table as delivered by the table recognizer: HTML plus placement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableInput {
    pub html: String,
    #[serde(default)]
    pub caption: String,
    pub anchor_char_offset: usize,
}

#[derive(Debug, Clone)]
pub struct IngestRequest {
    pub doc_id: String,
    pub source_uri: String,
    pub raw: Vec<u8>,
    pub tables: Vec<TableInput>,
}

/// Route, optionally OCR, then run both parsers. Per-variant failures are
/// recorded on the document; a document with no variants is failed.
pub fn ingest_document(
    req: &IngestRequest,
    service: &dyn ParserService,
    ocr: Option<&OcrCommand>,
) -> Result<ParsedDocument, IngestError> {
    let plan = route_document(&probe_source(&req.raw))?;
    let mut doc = ParsedDocument::new(&req.doc_id, &req.source_uri);

    let ocr_output;
    let raw: &[u8] = if plan.ocr {
        let cmd = ocr.ok_or_else(|| IngestError::Ocr("no OCR command configured".into()))?;
        ocr_output = cmd.run(&req.raw)?;
        doc.ocr_applied = true;
        &ocr_output
    } else {
        &req.raw
    };

    for kind in plan.parsers {
        match parse_variant(raw, kind, service) {
            Ok(v) => {
                doc.variants.insert(kind, v);
            }
            Err(e) => {
                log::warn!("{}: {kind} failed: {e}", req.doc_id);
                doc.failures.push(VariantFailure {
                    kind,
                    reason: e.to_string(),
                });
            }
        }
    }

    if let Some(host) = doc.preferred_variant() {
        let host_len = host.text.chars().count();
        let mut tables = Vec::with_capacity(req.tables.len());
        for t in &req.tables {
            let markdown = html_table_to_markdown(&t.html)?;
            if t.anchor_char_offset > host_len {
                log::warn!(
                    "{}: table anchor {} beyond text length {host_len}, clamped",
                    req.doc_id,
                    t.anchor_char_offset
                );
            }
            tables.push(TableBlock {
                markdown,
                caption: t.caption.clone(),
                anchor_char_offset: t.anchor_char_offset.min(host_len),
            });
        }
        doc.set_tables(tables);
    }
    Ok(doc)
}

fn sort_tables(tables: &mut [TableBlock]) {
    tables.sort_by(|a, b| {
        a.anchor_char_offset
            .cmp(&b.anchor_char_offset)
            .then_with(|| a.caption.cmp(&b.caption))
            .then_with(|| a.markdown.cmp(&b.markdown))
    });
}

/// Insert each table (caption line, then markdown) at the first paragraph
/// end at or after its anchor. Paragraph ends are positions followed by a
/// blank-line separator, and the end of the text.
pub fn merge_tables(text: &str, tables: &[TableBlock]) -> String {
    if tables.is_empty() {
        return text.to_string();
    }
    let mut sorted = tables.to_vec();
    sort_tables(&mut sorted);

    let mut out = String::with_capacity(text.len() + sorted.iter().map(|t| t.markdown.len() + 4).sum::<usize>());
    let mut cursor = 0; // byte offset into text
    for table in &sorted {
        let anchor = byte_offset(text, table.anchor_char_offset).max(cursor);
        let insert_at = text[anchor..]
            .find(PARAGRAPH_SEPARATOR)
            .map(|i| anchor + i)
            .unwrap_or(text.len());
        out.push_str(&text[cursor..insert_at]);
        if !out.is_empty() {
            out.push_str(PARAGRAPH_SEPARATOR);
        }
        out.push_str(&table.rendered());
        cursor = insert_at;
    }
    out.push_str(&text[cursor..]);
    out
}
