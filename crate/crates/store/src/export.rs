//! CSV and table-dump serialization of curated records.

use curate_core::eval::TableDump;
use curate_core::generator::{Record, Row, Schema};

/// `doc_id`, the schema columns, then one `retired:{name}` column per
/// retired name seen on any record (first-seen order). RFC 4180 quoting
/// with CRLF line ends.
pub fn to_csv(schema: &Schema, docs: &[(String, Vec<Record>)]) -> Vec<u8> {
    let mut retired: Vec<&str> = Vec::new();
    for rec in docs.iter().flat_map(|(_, rs)| rs) {
        for name in rec.retired.keys() {
            if !retired.contains(&name.as_str()) {
                retired.push(name);
            }
        }
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::CRLF)
        .from_writer(Vec::new());
    let mut header = vec!["doc_id".to_string()];
    header.extend(schema.names().map(str::to_string));
    header.extend(retired.iter().map(|n| format!("retired:{n}")));
    w.write_record(&header).expect("write to memory");
    for (doc_id, records) in docs {
        for rec in records {
            let mut row = vec![doc_id.as_str()];
            row.extend(schema.names().map(|c| rec.value(c).unwrap_or_default()));
            row.extend(retired.iter().map(|n| rec.retired.get(*n).map(String::as_str).unwrap_or_default()));
            w.write_record(&row).expect("write to memory");
        }
    }
    w.into_inner().expect("flush to memory")
}

/// The evaluation dump. Documents whose latest batch produced no records
/// still appear, with an empty record list.
pub fn to_dump(schema: &Schema, docs: &[(String, Vec<Record>)]) -> TableDump {
    let mut dump = TableDump::new(schema);
    for (doc_id, records) in docs {
        let rows: Vec<Row> = records.iter().map(Record::values).collect();
        dump.push_document(doc_id, &rows);
    }
    dump
}
