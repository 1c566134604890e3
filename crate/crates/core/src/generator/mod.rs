//! Schema-driven prompting, LLM output parsing, and per-variant record
//! generation.

mod generate;
mod llm;
mod prompt;

use std::collections::HashSet;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::ingest::ParserKind;
use crate::verify::MatchGrade;

pub use generate::{extract_from_text, generate_records, DualRecordSets, GenerationConfig, VariantRecords};
pub use llm::{prompt_hash, HttpLlm, LlmError, LlmProvider, MockFixture, MockLlm, MockRule};
pub use prompt::{
    build_prompt, has_demonstration, parse_llm_output, ARTICLE_END, ARTICLE_START, EXAMPLE_END, EXAMPLE_RESPONSE, EXAMPLE_START,
    JSON_ONLY_REMINDER, MAPPING_HEADER,
};

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("schema has no columns")]
    Empty,
    #[error("duplicate column {0:?}")]
    Duplicate(String),
    #[error("blank column name")]
    BlankName,
    #[error("cannot parse schema file: {0}")]
    Parse(String),
}

#[derive(Debug, thiserror::Error)]
pub enum GenerateError {
    #[error("schema has no columns")]
    EmptySchema,
    #[error("LLM output is not a JSON list of objects")]
    OutputUnparseable { raw: String },
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("document {doc_id} has no usable variant")]
    NoVariants { doc_id: String },
    #[error("generation failed for {doc_id}: {reasons:?}")]
    GenerationFailed { doc_id: String, reasons: Vec<String> },
    #[error(transparent)]
    Ingest(#[from] crate::ingest::IngestError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example_hint: Option<String>,
}

/// The target table's columns, in order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawSchema")]
pub struct Schema {
    columns: Vec<Column>,
    #[serde(default)]
    version: u32,
}

#[derive(Deserialize)]
struct RawSchema {
    columns: Vec<Column>,
    #[serde(default)]
    version: u32,
}

impl TryFrom<RawSchema> for Schema {
    type Error = SchemaError;

    fn try_from(raw: RawSchema) -> Result<Self, Self::Error> {
        Schema::with_columns(raw.columns, raw.version)
    }
}

impl Schema {
    pub fn new<I, S>(names: I) -> Result<Self, SchemaError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let columns = names
            .into_iter()
            .map(|n| Column {
                name: n.into(),
                example_hint: None,
            })
            .collect();
        Self::with_columns(columns, 1)
    }

    pub fn with_columns(columns: Vec<Column>, version: u32) -> Result<Self, SchemaError> {
        if columns.is_empty() {
            return Err(SchemaError::Empty);
        }
        let mut seen = HashSet::new();
        let mut out = Vec::with_capacity(columns.len());
        for mut c in columns {
            c.name = c.name.trim().to_string();
            if c.name.is_empty() {
                return Err(SchemaError::BlankName);
            }
            if !seen.insert(c.name.clone()) {
                return Err(SchemaError::Duplicate(c.name));
            }
            out.push(c);
        }
        Ok(Schema { columns: out, version })
    }

    /// Parse a schema file: a JSON column list (strings or `{name, example_hint}`
    /// objects, optionally wrapped as `{"columns": [...]}`), or else the header
    /// row of a CSV file.
    pub fn parse_file(content: &str) -> Result<Self, SchemaError> {
        let trimmed = content.trim_start_matches('\u{feff}').trim();
        if trimmed.is_empty() {
            return Err(SchemaError::Parse("empty schema file".into()));
        }
        if trimmed.starts_with('[') || trimmed.starts_with('{') {
            return Self::parse_json(trimmed);
        }
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .from_reader(trimmed.as_bytes());
        let header = reader
            .records()
            .next()
            .ok_or_else(|| SchemaError::Parse("no header row".into()))?
            .map_err(|e| SchemaError::Parse(e.to_string()))?;
        Self::new(header.iter().map(str::to_string))
    }

    fn parse_json(text: &str) -> Result<Self, SchemaError> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Entry {
            Name(String),
            Full(Column),
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum File {
            List(Vec<Entry>),
            Wrapped { columns: Vec<Entry> },
        }
        let file: File = serde_json::from_str(text).map_err(|e| SchemaError::Parse(e.to_string()))?;
        let entries = match file {
            File::List(l) | File::Wrapped { columns: l } => l,
        };
        let columns = entries
            .into_iter()
            .map(|e| match e {
                Entry::Name(name) => Column {
                    name,
                    example_hint: None,
                },
                Entry::Full(c) => c,
            })
            .collect();
        Self::with_columns(columns, 1)
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c.name == name)
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    /// Resolve an output key to a column: exact match first, then
    /// case-insensitive after trimming.
    pub fn resolve(&self, key: &str) -> Option<&str> {
        if let Some(c) = self.columns.iter().find(|c| c.name == key) {
            return Some(&c.name);
        }
        let k = key.trim().to_lowercase();
        self.columns
            .iter()
            .find(|c| c.name.to_lowercase() == k)
            .map(|c| c.name.as_str())
    }
}

/// Column → value for every schema column, in schema order. Empty string
/// means "not found".
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Row(IndexMap<String, String>);

impl Row {
    pub fn empty(schema: &Schema) -> Self {
        Row(schema.names().map(|n| (n.to_string(), String::new())).collect())
    }

    /// Build a row in schema order, ignoring keys outside the schema.
    pub fn from_pairs<K, V, I>(schema: &Schema, pairs: I) -> Self
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: Into<String>,
    {
        let mut row = Row::empty(schema);
        for (k, v) in pairs {
            if let Some(slot) = row.0.get_mut(k.as_ref()) {
                *slot = v.into();
            }
        }
        row
    }

    pub fn get(&self, column: &str) -> Option<&str> {
        self.0.get(column).map(String::as_str)
    }

    pub fn set(&mut self, column: &str, value: impl Into<String>) {
        self.0.insert(column.to_string(), value.into());
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// True when every cell is empty.
    pub fn is_blank(&self) -> bool {
        self.0.values().all(|v| v.trim().is_empty())
    }

    /// Order-independent canonical form used for exact-duplicate detection.
    pub fn canonical(&self) -> String {
        let mut pairs: Vec<(&String, &String)> = self.0.iter().collect();
        pairs.sort();
        serde_json::to_string(&pairs).expect("strings serialize")
    }

    pub fn into_inner(self) -> IndexMap<String, String> {
        self.0
    }
}

impl FromIterator<(String, String)> for Row {
    fn from_iter<T: IntoIterator<Item = (String, String)>>(iter: T) -> Self {
        Row(iter.into_iter().collect())
    }
}

/// Where a record came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Origin {
    StructuredTei,
    GenericText,
    Merged,
}

impl From<ParserKind> for Origin {
    fn from(k: ParserKind) -> Self {
        match k {
            ParserKind::StructuredTei => Origin::StructuredTei,
            ParserKind::GenericText => Origin::GenericText,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RecordStatus {
    Generated,
    Edited,
    Locked,
    Irrelevant,
}

impl RecordStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordStatus::Generated => "GENERATED",
            RecordStatus::Edited => "EDITED",
            RecordStatus::Locked => "LOCKED",
            RecordStatus::Irrelevant => "IRRELEVANT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "GENERATED" => RecordStatus::Generated,
            "EDITED" => RecordStatus::Edited,
            "LOCKED" => RecordStatus::Locked,
            "IRRELEVANT" => RecordStatus::Irrelevant,
            _ => return None,
        })
    }
}

impl fmt::Display for RecordStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub value: String,
    #[serde(default)]
    pub edited: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<MatchGrade>,
}

impl Cell {
    pub fn new(value: impl Into<String>) -> Self {
        Cell {
            value: value.into(),
            edited: false,
            provenance: None,
        }
    }
}

/// The other pipeline's aligned record, offered for comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub origin: Origin,
    pub values: Row,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub record_id: String,
    pub doc_id: String,
    pub cells: IndexMap<String, Cell>,
    pub origin: Origin,
    pub status: RecordStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alternative: Option<Alternative>,
    /// Values of columns removed from the schema after generation.
    #[serde(default, skip_serializing_if = "IndexMap::is_empty")]
    pub retired: IndexMap<String, String>,
}

impl Record {
    pub fn new(record_id: impl Into<String>, doc_id: impl Into<String>, origin: Origin, row: Row) -> Self {
        Record {
            record_id: record_id.into(),
            doc_id: doc_id.into(),
            cells: row.into_inner().into_iter().map(|(k, v)| (k, Cell::new(v))).collect(),
            origin,
            status: RecordStatus::Generated,
            alternative: None,
            retired: IndexMap::new(),
        }
    }

    pub fn values(&self) -> Row {
        self.cells.iter().map(|(k, c)| (k.clone(), c.value.clone())).collect()
    }

    pub fn value(&self, column: &str) -> Option<&str> {
        self.cells.get(column).map(|c| c.value.as_str())
    }
}
