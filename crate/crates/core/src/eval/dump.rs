use std::collections::HashSet;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::generator::{Row, Schema};

/// The table interchange format shared by the simulator, the exporter and
/// the evaluator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableDump {
    pub schema: Vec<String>,
    pub documents: Vec<DumpDocument>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpDocument {
    pub doc_id: String,
    pub records: Vec<IndexMap<String, String>>,
}

impl TableDump {
    pub fn new(schema: &Schema) -> Self {
        TableDump {
            schema: schema.names().map(str::to_string).collect(),
            documents: Vec::new(),
        }
    }

    /// Append a document; record values are emitted in schema order and
    /// missing columns become empty strings.
    pub fn push_document(&mut self, doc_id: impl Into<String>, rows: &[Row]) {
        let records = rows
            .iter()
            .map(|r| {
                self.schema
                    .iter()
                    .map(|c| (c.clone(), r.get(c).unwrap_or_default().to_string()))
                    .collect()
            })
            .collect();
        self.documents.push(DumpDocument {
            doc_id: doc_id.into(),
            records,
        });
    }

    pub fn parse(text: &str) -> Result<Self, EvalError> {
        let dump: TableDump = serde_json::from_str(text).map_err(|e| EvalError::MalformedDump(e.to_string()))?;
        dump.validate()?;
        Ok(dump)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let schema = self.schema_checked()?;
        let mut seen = HashSet::new();
        for d in &self.documents {
            if !seen.insert(d.doc_id.as_str()) {
                return Err(EvalError::MalformedDump(format!("duplicate doc_id {:?}", d.doc_id)));
            }
            for r in &d.records {
                if let Some(k) = r.keys().find(|k| !schema.contains(k)) {
                    return Err(EvalError::MalformedDump(format!(
                        "record in {:?} has column {k:?} outside the schema",
                        d.doc_id
                    )));
                }
            }
        }
        Ok(())
    }

    fn schema_checked(&self) -> Result<Schema, EvalError> {
        Schema::new(&self.schema).map_err(|e| EvalError::MalformedDump(e.to_string()))
    }

    pub fn schema(&self) -> Result<Schema, EvalError> {
        self.schema_checked()
    }

    pub fn to_json_pretty(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("dump serializes");
        s.push('\n');
        s
    }

    pub fn rows(&self, doc: &DumpDocument) -> Vec<Row> {
        doc.records.iter().map(|r| r.iter().map(|(k, v)| (k.clone(), v.clone())).collect()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_schema_order() {
        let s = Schema::new(["B", "A"]).unwrap();
        let mut d = TableDump::new(&s);
        d.push_document("d1", &[Row::from_pairs(&s, [("A", "1")])]);
        let text = d.to_json_pretty();
        assert!(text.find("\"B\": \"\"").unwrap() < text.find("\"A\": \"1\"").unwrap());
        assert_eq!(TableDump::parse(&text).unwrap(), d);
    }

    #[test]
    fn malformed_inputs() {
        for bad in [
            "not json",
            r#"{"schema": [], "documents": []}"#,
            r#"{"schema": ["A"], "documents": [{"doc_id": "x", "records": [{"Z": "1"}]}]}"#,
            r#"{"schema": ["A"], "documents": [{"doc_id": "x", "records": []}, {"doc_id": "x", "records": []}]}"#,
            r#"{"schema": ["A"], "documents": [{"doc_id": "x", "records": [{"A": 1}]}]}"#,
        ] {
            assert!(matches!(TableDump::parse(bad), Err(EvalError::MalformedDump(_))), "{bad}");
        }
    }
}
