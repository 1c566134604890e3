use serde_json::Value;

use super::{GenerateError, Row, Schema};
use crate::sampler::IclExample;

pub const ARTICLE_START: &str = "[Given Article Start]";
pub const ARTICLE_END: &str = "[Given Article End]";
pub const MAPPING_HEADER: &str = "[Dictionary Key Mapping in your response]";
pub const EXAMPLE_START: &str = "[Example Article Start]";
pub const EXAMPLE_END: &str = "[Example Article End]";
pub const EXAMPLE_RESPONSE: &str = "[Example Response]";
pub const JSON_ONLY_REMINDER: &str = "Respond with the JSON list only, without any other text.";

/// Render the extraction prompt.
///
/// Mapping hints come from the top example's first record; without examples
/// (or when that cell is empty) the column's own hint is used, else nothing.
/// Each example becomes a demonstration block placed before the article.
pub fn build_prompt(schema: &Schema, article_text: &str, examples: &[IclExample]) -> Result<String, GenerateError> {
    if schema.is_empty() {
        return Err(GenerateError::EmptySchema);
    }
    let names: Vec<&str> = schema.names().collect();
    let first = examples.first().and_then(|e| e.records.first());

    let mut p = String::with_capacity(article_text.len() + 512);
    p.push_str(&format!("Please, extract {} from the given article.\n\n", names.join(", ")));
    p.push_str(
        "For the extracted information, you MUST respond in a list of JSON dictionaries \
         structure with the given Dictionary Key Mapping.\n\n",
    );
    p.push_str(MAPPING_HEADER);
    p.push_str("\n{\n");
    let slots: Vec<String> = schema
        .columns()
        .iter()
        .map(|c| {
            let hint = first
                .and_then(|r| r.get(&c.name))
                .filter(|v| !v.is_empty())
                .or(c.example_hint.as_deref())
                .unwrap_or("");
            format!("{}: (example: {})", c.name, hint)
        })
        .collect();
    p.push_str(&slots.join(",\n"));
    p.push_str("\n}\n\n");

    for ex in examples {
        p.push_str(EXAMPLE_START);
        p.push('\n');
        p.push_str(&ex.source_doc_excerpt);
        p.push('\n');
        p.push_str(EXAMPLE_END);
        p.push('\n');
        p.push_str(EXAMPLE_RESPONSE);
        p.push('\n');
        p.push_str(&render_rows(schema, &ex.records));
        p.push_str("\n\n");
    }

    p.push_str(ARTICLE_START);
    p.push('\n');
    p.push_str(article_text);
    p.push('\n');
    p.push_str(ARTICLE_END);
    p.push('\n');
    Ok(p)
}

pub fn has_demonstration(prompt: &str) -> bool {
    prompt.contains(EXAMPLE_START)
}

/// Compact JSON list of rows with keys in schema order.
pub(crate) fn render_rows(schema: &Schema, rows: &[Row]) -> String {
    let list: Vec<serde_json::Map<String, Value>> = rows
        .iter()
        .map(|r| {
            schema
                .names()
                .map(|n| (n.to_string(), Value::String(r.get(n).unwrap_or("").to_string())))
                .collect()
        })
        .collect();
    serde_json::to_string(&list).expect("json values serialize")
}

/// Extract the first JSON list of objects in `raw`, ignoring any prose or code
/// fences around it, and map each object onto the schema.
pub fn parse_llm_output(raw: &str, schema: &Schema) -> Result<Vec<Row>, GenerateError> {
    for (start, _) in raw.match_indices('[') {
        let mut stream = serde_json::Deserializer::from_str(&raw[start..]).into_iter::<Value>();
        let Some(Ok(Value::Array(items))) = stream.next() else {
            continue;
        };
        if !items.iter().all(Value::is_object) {
            continue;
        }
        return Ok(items
            .into_iter()
            .map(|item| {
                let Value::Object(map) = item else { unreachable!() };
                let mut row = Row::empty(schema);
                for (k, v) in map {
                    if let Some(col) = schema.resolve(&k) {
                        let col = col.to_string();
                        row.set(&col, stringify(v));
                    }
                }
                row
            })
            .collect());
    }
    Err(GenerateError::OutputUnparseable { raw: raw.to_string() })
}

/// Strings as is; numbers in shortest round-trip form; null as empty;
/// compound values as compact JSON.
fn stringify(v: Value) -> String {
    match v {
        Value::String(s) => s,
        Value::Null => String::new(),
        Value::Number(n) => n.to_string(),
        other => other.to_string(),
    }
}
