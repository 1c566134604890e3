#![allow(dead_code)]

use std::sync::Arc;

use curate_core::aligner::HashingEmbedder;
use curate_core::config::EngineConfig;
use curate_core::generator::{LlmProvider, MockFixture, MockLlm, MockRule};
use curate_core::ingest::OfflineParserService;
use curate_store::{Backends, CurationService, DocumentUpload};

pub const SCHEMA: &str = "Model,Dataset,Score\n";

pub fn tei(i: usize) -> String {
    format!(
        r#"<TEI xmlns="http://www.tei-c.org/ns/1.0"><teiHeader><fileDesc><titleStmt><title>Paper {i}</title></titleStmt></fileDesc></teiHeader>
<text><body><div><head>Results</head>
<p>We train Model M{i} on the corpus.</p>
<p>Model M{i} reaches {i}1.5 F1 on Dataset D{i}, a strong result.</p>
</div></body></text></TEI>"#
    )
}

pub fn upload(i: usize) -> DocumentUpload {
    DocumentUpload {
        doc_id: Some(format!("doc{i}")),
        content: Some(tei(i)),
        ..DocumentUpload::default()
    }
}

/// Zero-shot answers miss the score; prompts with a demonstration get it.
pub fn fixture(n: usize) -> MockFixture {
    let rules = (0..n)
        .map(|i| MockRule {
            article_contains: format!("Model M{i} reaches"),
            zero_shot: Some(format!(r#"[{{"Model": "M{i}", "Dataset": "D{i}"}}]"#)),
            with_examples: Some(format!(r#"[{{"Model": "M{i}", "Dataset": "D{i}", "Score": "{i}1.5"}}]"#)),
            explanation: Some(format!("Model M{i} reaches {i}1.5 F1 on Dataset D{i}")),
        })
        .collect();
    MockFixture {
        rules,
        ..MockFixture::default()
    }
}

pub fn backends(llm: Arc<dyn LlmProvider>) -> Backends {
    Backends {
        llm,
        embedder: Arc::new(HashingEmbedder::default()),
        parser: Arc::new(OfflineParserService),
        ocr: None,
    }
}

pub fn service_with(llm: Arc<dyn LlmProvider>, cfg: EngineConfig) -> CurationService {
    CurationService::in_memory(cfg, backends(llm)).unwrap()
}

pub fn service(n: usize) -> CurationService {
    let cfg = EngineConfig {
        jobs: 2,
        ..EngineConfig::default()
    };
    service_with(Arc::new(MockLlm::new(fixture(n))), cfg)
}

/// A project holding `n` ingested documents `doc0..`.
pub fn project(svc: &CurationService, n: usize) -> i64 {
    svc.create_project("p", SCHEMA, (0..n).map(upload).collect()).unwrap().project_id
}

pub fn ids(range: std::ops::Range<usize>) -> Vec<String> {
    range.map(|i| format!("doc{i}")).collect()
}
