#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use curate_core::config::EngineConfig;
use curate_core::eval::TableDump;
use curate_core::generator::{MockFixture, MockRule, Row, Schema};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_curate"))
}

pub fn run(args: &[&str]) -> Output {
    bin().args(args).env("RUST_LOG", "off").output().unwrap()
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr_json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|_| panic!("stderr is not JSON: {}", String::from_utf8_lossy(&o.stderr)))
}

/// A synthetic curation dataset: each document states one material and its
/// strength. Zero-shot answers miss the strength; answers with a
/// demonstration are correct.
pub struct Synthetic {
    pub dir: tempfile::TempDir,
    pub config: PathBuf,
}

impl Synthetic {
    pub fn path(&self) -> &Path {
        self.dir.path()
    }

    pub fn dataset(&self) -> PathBuf {
        self.dir.path().join("dataset")
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig::load(&self.config).unwrap()
    }
}

pub fn synthetic(n: usize) -> Synthetic {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("dataset");
    std::fs::create_dir_all(ds.join("docs")).unwrap();
    let schema = Schema::new(["Material", "Strength"]).unwrap();
    let mut gold = TableDump::new(&schema);
    let mut rules = Vec::new();
    for i in 0..n {
        let id = format!("doc{i:02}");
        let text = format!(
            "Processing of alloy samples.\n\nAlloy A{i} reaches {i}0 MPa yield strength after ageing.\n\nOther remarks follow."
        );
        std::fs::write(ds.join("docs").join(format!("{id}.txt")), text).unwrap();
        gold.push_document(
            &id,
            &[Row::from_pairs(&schema, [("Material", format!("A{i}")), ("Strength", format!("{i}0 MPa"))])],
        );
        rules.push(MockRule {
            article_contains: format!("Alloy A{i} reaches"),
            zero_shot: Some(format!(r#"[{{"Material": "A{i}", "Strength": ""}}]"#)),
            with_examples: Some(format!(r#"[{{"Material": "A{i}", "Strength": "{i}0 MPa"}}]"#)),
            explanation: None,
        });
    }
    std::fs::write(ds.join("gold.json"), gold.to_json_pretty()).unwrap();
    let fixture = MockFixture {
        rules,
        ..MockFixture::default()
    };
    let llm = dir.path().join("llm.json");
    std::fs::write(&llm, serde_json::to_string_pretty(&fixture).unwrap()).unwrap();
    let cfg = EngineConfig {
        llm_mock_fixture: Some(llm.display().to_string()),
        ..EngineConfig::default()
    };
    let config = dir.path().join("curate.toml");
    std::fs::write(&config, cfg.to_toml()).unwrap();
    Synthetic { dir, config }
}
