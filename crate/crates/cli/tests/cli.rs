mod common;

use common::*;
use curate_core::config::EngineConfig;

#[test]
fn help_lists_every_flag() {
    let top = stdout(&run(&["--help"]));
    for cmd in ["ingest", "run", "simulate", "eval", "export", "serve"] {
        assert!(top.contains(cmd), "{cmd} missing from top-level help");
    }
    let mut all = String::new();
    for cmd in ["ingest", "run", "simulate", "eval", "export", "serve"] {
        let o = run(&[cmd, "--help"]);
        assert!(o.status.success());
        all.push_str(&stdout(&o));
    }
    for flag in [
        "--config",
        "--seed",
        "--jobs",
        "--k",
        "--m",
        "--window",
        "--overlap",
        "--format",
        "--out",
        "--json",
        "--exact-case",
    ] {
        assert!(all.contains(&format!("{flag} ")) || all.contains(&format!("{flag}\n")), "{flag} not documented");
    }
}

#[test]
fn flags_round_trip_through_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let flags = [
        "--seed", "7", "--jobs", "2", "--k", "3", "--m", "2", "--window", "5000", "--overlap", "0.2", "--exact-case",
        "--print-config", "eval", "x", "y",
    ];
    let first = run(&flags);
    assert!(first.status.success());
    let toml = stdout(&first);
    let cfg = EngineConfig::parse(&toml).unwrap();
    assert_eq!(
        (cfg.seed, cfg.jobs, cfg.k, cfg.m, cfg.window, cfg.overlap, cfg.exact_case),
        (7, 2, 3, 2, 5000, 0.2, true)
    );
    let path = dir.path().join("c.toml");
    std::fs::write(&path, &toml).unwrap();
    let again = run(&["--config", path.to_str().unwrap(), "--print-config", "eval", "x", "y"]);
    assert_eq!(stdout(&again), toml);
}

#[test]
fn usage_and_config_errors_are_json() {
    let o = run(&["simulate"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["error"], "UsageError");
    let o = run(&["--overlap", "1.5", "eval", "a", "b"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "ConfigError");
}

#[test]
fn simulate_is_deterministic_and_reports_a_row() {
    let s = synthetic(6);
    let cfg = s.config.to_str().unwrap();
    let ds = s.dataset();
    let out1 = s.path().join("a.json");
    let out2 = s.path().join("b.json");
    for out in [&out1, &out2] {
        let o = run(&["--config", cfg, "--k", "3", "--seed", "11", "simulate", ds.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(stdout(&o), "dataset\tP=100.00\tR=100.00\tF1=100.00\tChrF=100.00\n");
    }
    assert_eq!(std::fs::read(&out1).unwrap(), std::fs::read(&out2).unwrap());
}

#[test]
fn simulate_without_pool_is_zero_shot() {
    let s = synthetic(4);
    let trace = s.path().join("trace.json");
    let out = s.path().join("p.json");
    let o = run(&[
        "--config", s.config.to_str().unwrap(), "--k", "0", "--json", "simulate", s.dataset().to_str().unwrap(),
        "--out", out.to_str().unwrap(), "--trace", trace.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["aggregate"]["precision"], 100.0);
    assert_eq!(report["aggregate"]["recall"], 50.0);
    let trace: serde_json::Value = serde_json::from_slice(&std::fs::read(&trace).unwrap()).unwrap();
    for t in trace.as_array().unwrap() {
        assert!(t["pool_doc_ids"].as_array().unwrap().is_empty());
        assert!(t["example_doc_ids"].as_array().unwrap().is_empty());
    }
}

#[test]
fn simulate_without_gold_writes_nothing() {
    let s = synthetic(2);
    std::fs::remove_file(s.dataset().join("gold.json")).unwrap();
    let out = s.path().join("p.json");
    let o = run(&["--config", s.config.to_str().unwrap(), "simulate", s.dataset().to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stderr_json(&o)["error"], "MissingGold");
    assert!(!out.exists());
}

#[test]
fn simulate_checks_a_given_schema() {
    let s = synthetic(2);
    let schema = s.path().join("schema.csv");
    std::fs::write(&schema, "Material,Hardness\n").unwrap();
    let out = s.path().join("p.json");
    let o = run(&[
        "--config", s.config.to_str().unwrap(), "simulate", s.dataset().to_str().unwrap(), "--schema",
        schema.to_str().unwrap(), "--out", out.to_str().unwrap(),
    ]);
    assert_eq!(stderr_json(&o)["error"], "SchemaMismatch");
    assert!(!out.exists());
}

#[test]
fn eval_reports_and_validates() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, body: &str| {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p.to_str().unwrap().to_string()
    };
    let gold = write("gold.json", r#"{"schema": ["A", "B"], "documents": [{"doc_id": "d1", "records": [{"A": "x", "B": "y"}]}]}"#);
    let pred = write("pred.json", r#"{"schema": ["A", "B"], "documents": [{"doc_id": "d1", "records": [{"A": "X", "B": "z"}]}]}"#);
    let other = write("other.json", r#"{"schema": ["A", "C"], "documents": []}"#);
    let bad = write("bad.json", "{");

    let o = run(&["eval", &gold, &gold]);
    assert!(stdout(&o).contains("P=100.00\tR=100.00\tF1=100.00\tChrF=100.00"));

    let report = dir.path().join("report.json");
    let o = run(&["eval", &pred, &gold, "--out", report.to_str().unwrap()]);
    assert!(o.status.success());
    let r: serde_json::Value = serde_json::from_slice(&std::fs::read(&report).unwrap()).unwrap();
    assert_eq!(r["aggregate"]["f1"], 50.0);
    let o = run(&["--exact-case", "--json", "eval", &pred, &gold]);
    let r: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(r["aggregate"]["f1"], 0.0);

    assert_eq!(stderr_json(&run(&["eval", &other, &gold]))["error"], "SchemaMismatch");
    assert_eq!(stderr_json(&run(&["eval", &bad, &gold]))["error"], "MalformedDump");
}

#[test]
fn ingest_run_export_through_the_binary() {
    let s = synthetic(3);
    let cfg = s.config.to_str().unwrap();
    let db = s.path().join("store.db");
    let db = db.to_str().unwrap();
    let schema = s.path().join("schema.csv");
    std::fs::write(&schema, "Material,Strength\n").unwrap();
    let docs: Vec<String> = (0..3)
        .map(|i| s.dataset().join(format!("docs/doc{i:02}.txt")).display().to_string())
        .collect();

    let mut args = vec!["--config", cfg, "ingest", "--db", db, "--project", "alloys", "--schema", schema.to_str().unwrap()];
    args.extend(docs.iter().map(String::as_str));
    let o = run(&args);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).lines().count(), 3);

    let o = run(&["--config", cfg, "run", "--db", db, "--project", "alloys", "--phase", "pilot", "--doc", "doc00"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("batch 1 (#1): 1 records from 1 documents, pool version 0"));
    let o = run(&["--config", cfg, "--json", "run", "--db", db, "--project", "alloys"]);
    let batch: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(batch["doc_ids"], serde_json::json!(["doc01", "doc02"]));

    let o = run(&["--config", cfg, "export", "--db", db, "--project", "alloys", "--format", "csv"]);
    assert_eq!(stdout(&o), "doc_id,Material,Strength\r\ndoc00,A0,\r\ndoc01,A1,\r\ndoc02,A2,\r\n");
    let out = s.path().join("export.json");
    let o = run(&["export", "--db", db, "--project", "alloys", "--format", "json", "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(std::fs::read_to_string(&out).unwrap().contains("\"doc_id\": \"doc02\""));

    let o = run(&["export", "--db", db, "--project", "nope"]);
    assert_eq!(stderr_json(&o)["error"], "InvalidRequest");
}
