mod common;

use std::collections::HashSet;
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex};

use common::*;
use curate_core::config::EngineConfig;
use curate_core::eval::{evaluate_dataset, EvalOptions, TableDump};
use curate_core::generator::{LlmError, LlmProvider, MockLlm, RecordStatus};
use curate_core::verify::Band;
use curate_store::{AuditKind, CurationService, DocumentUpload, ExportFormat, Phase, StoreError};
use proptest::prelude::*;

#[test]
fn create_project_parses_schema_and_rejects_duplicates() {
    let svc = service(0);
    let p = svc.create_project("tdms", "Task,Dataset,Metric,Score\n", vec![]).unwrap();
    assert_eq!(p.schema.names().collect::<Vec<_>>(), ["Task", "Dataset", "Metric", "Score"]);
    assert!(p.documents.is_empty() && p.batches.is_empty());
    assert!(matches!(
        svc.create_project("tdms", SCHEMA, vec![]),
        Err(StoreError::DuplicateName(_))
    ));
    assert!(matches!(
        svc.create_project("bad", "{not json", vec![]),
        Err(StoreError::SchemaParse(_))
    ));
}

#[test]
fn ingestion_records_failures_and_duplicates() {
    let svc = service(1);
    let pid = project(&svc, 1);
    assert!(matches!(
        svc.add_documents(pid, vec![upload(0)]),
        Err(StoreError::DuplicateDocument(id)) if id == "doc0"
    ));
    let pdf = DocumentUpload {
        doc_id: Some("scan".into()),
        content: Some("%PDF-1.4 /Font".into()),
        ..DocumentUpload::default()
    };
    let out = svc.add_documents(pid, vec![pdf]).unwrap();
    assert!(out[0].failed);
    assert_eq!(out[0].failures.len(), 2);
    assert!(matches!(
        svc.run_batch(pid, Phase::Pilot, &["scan".into()]),
        Err(StoreError::DocsNotIngested(ids)) if ids == ["scan"]
    ));
}

#[test]
fn run_batch_guards() {
    let svc = service(11);
    let pid = project(&svc, 11);
    assert!(matches!(
        svc.run_batch(pid, Phase::Pilot, &ids(0..11)),
        Err(StoreError::PilotCapExceeded { requested: 11, cap: 10 })
    ));
    assert!(matches!(
        svc.run_batch(pid, Phase::Batch, &["nope".into()]),
        Err(StoreError::DocsNotIngested(_))
    ));
    assert!(matches!(svc.run_batch(pid, Phase::Batch, &[]), Err(StoreError::InvalidRequest(_))));
    assert!(matches!(
        svc.run_batch(pid, Phase::Batch, &["doc0".into(), "doc0".into()]),
        Err(StoreError::InvalidRequest(_))
    ));
    // BATCH phase is not capped
    let b = svc.run_batch(pid, Phase::Batch, &ids(0..11)).unwrap();
    assert_eq!(b.records.len(), 11);
}

#[test]
fn cold_start_batch_is_zero_shot_and_graded() {
    let svc = service(3);
    let pid = project(&svc, 3);
    let b = svc.run_batch(pid, Phase::Pilot, &ids(0..3)).unwrap();
    assert_eq!(b.summary.seq, 1);
    assert_eq!(b.summary.pool_version_used, 0);
    assert!(b.failures.is_empty());
    assert_eq!(b.records.len(), 3);
    for (i, r) in b.records.iter().enumerate() {
        assert_eq!(r.doc_id, format!("doc{i}"));
        assert_eq!(r.status, RecordStatus::Generated);
        assert_eq!(r.value("Score"), Some(""), "zero-shot answer lacks the score");
        let g = r.cells["Model"].provenance.as_ref().unwrap();
        assert_eq!((g.ratio, g.band), (100, Band::Supported));
        assert!(r.alternative.is_some());
    }
    assert_eq!(svc.get_batch(b.summary.batch_id).unwrap(), b);
}

#[test]
fn failing_llm_is_reported_per_document() {
    let mut fx = fixture(2);
    fx.rules.remove(1);
    let svc = service_with(Arc::new(MockLlm::new(fx)), EngineConfig::default());
    let pid = project(&svc, 2);
    let b = svc.run_batch(pid, Phase::Pilot, &ids(0..2)).unwrap();
    assert_eq!(b.records.len(), 1);
    assert_eq!(b.failures.len(), 1);
    assert_eq!(b.failures[0].doc_id, "doc1");
}

#[test]
fn edit_lock_and_second_batch_uses_corrections() {
    let svc = service(4);
    let pid = project(&svc, 4);
    let pilot = svc.run_batch(pid, Phase::Pilot, &ids(0..2)).unwrap();
    let r0 = &pilot.records[0].record_id;

    let edited = svc.apply_edit(r0, "Score", "01.5", "alice").unwrap();
    assert_eq!(edited.status, RecordStatus::Edited);
    assert!(edited.cells["Score"].edited);
    assert_eq!(edited.cells["Score"].provenance.as_ref().unwrap().band, Band::Supported);
    assert_eq!(svc.get_record(r0).unwrap(), edited);
    assert_eq!(svc.audit_log(pid).unwrap().len(), 1);

    assert!(matches!(svc.apply_edit(r0, "Nope", "x", "alice"), Err(StoreError::UnknownColumn(_))));
    svc.lock_record(r0, "alice").unwrap();
    assert!(matches!(svc.apply_edit(r0, "Score", "1", "alice"), Err(StoreError::RecordLocked(_))));
    assert!(matches!(svc.lock_record(r0, "alice"), Err(StoreError::AlreadyLocked(_))));

    let pool = svc.pool_snapshot(pid).unwrap();
    assert_eq!(pool.version(), 1);
    assert!(pool.contains_record(r0));

    let second = svc.run_batch(pid, Phase::Batch, &ids(2..4)).unwrap();
    assert_eq!(second.summary.seq, 2);
    assert_eq!(second.summary.pool_version_used, 1);
    assert_eq!(second.records[0].value("Score"), Some("21.5"));

    let kinds: Vec<AuditKind> = svc.audit_log(pid).unwrap().iter().map(|e| e.kind).collect();
    assert_eq!(kinds, [AuditKind::UpdatingValue, AuditKind::LockingData]);
    let view = svc.get_project(pid).unwrap();
    assert_eq!(view.batches.iter().map(|b| b.seq).collect::<Vec<_>>(), [1, 2]);
    assert_eq!(view.pool_records, 1);
}

#[test]
fn two_locks_of_one_document_share_a_pool_entry() {
    let mut fx = fixture(1);
    fx.rules[0].zero_shot = Some(r#"[{"Model": "M0", "Dataset": "D0"}, {"Model": "M0b", "Dataset": "Dx"}]"#.into());
    let svc = service_with(Arc::new(MockLlm::new(fx)), EngineConfig::default());
    let pid = project(&svc, 1);
    let b = svc.run_batch(pid, Phase::Pilot, &ids(0..1)).unwrap();
    assert_eq!(b.records.len(), 2);
    for r in &b.records {
        svc.lock_record(&r.record_id, "bob").unwrap();
    }
    let pool = svc.pool_snapshot(pid).unwrap();
    assert_eq!(pool.entries().len(), 1);
    assert_eq!(pool.entries()[0].records.len(), 2);
    assert_eq!(pool.version(), 2);
}

#[test]
fn irrelevant_records_leave_export_and_cannot_lock() {
    let svc = service(2);
    let pid = project(&svc, 2);
    assert!(matches!(svc.export(pid, ExportFormat::Csv, false), Err(StoreError::NoBatches)));
    let b = svc.run_batch(pid, Phase::Pilot, &ids(0..2)).unwrap();
    let r1 = &b.records[1].record_id;

    svc.mark_irrelevant(r1, "carol").unwrap();
    svc.mark_irrelevant(r1, "carol").unwrap();
    assert!(matches!(svc.lock_record(r1, "carol"), Err(StoreError::InvalidTransition { .. })));
    assert!(matches!(svc.apply_edit(r1, "Score", "1", "carol"), Err(StoreError::InvalidTransition { .. })));

    let csv = String::from_utf8(svc.export(pid, ExportFormat::Csv, false).unwrap()).unwrap();
    assert_eq!(csv, "doc_id,Model,Dataset,Score\r\ndoc0,M0,D0,\r\n");
    let all = String::from_utf8(svc.export(pid, ExportFormat::Csv, true).unwrap()).unwrap();
    assert_eq!(all.lines().count(), 3);

    let back = svc.unmark_irrelevant(r1, "carol").unwrap();
    assert_eq!(back.status, RecordStatus::Generated);
    let events = svc.audit_log(pid).unwrap();
    assert_eq!(events.len(), 2, "repeat mark is a no-op");
    assert!(events.iter().all(|e| e.kind == AuditKind::SettingIrrelevant && e.actor == "carol"));
    assert_eq!(events[1].before.as_deref(), Some("IRRELEVANT"));
    assert_eq!(events[1].after.as_deref(), Some("GENERATED"));

    // locked records cannot be rejected; unlock first
    svc.lock_record(r1, "carol").unwrap();
    assert!(matches!(svc.mark_irrelevant(r1, "carol"), Err(StoreError::InvalidTransition { .. })));
    assert_eq!(svc.unlock_record(r1, "carol").unwrap().status, RecordStatus::Edited);
    assert!(svc.pool_snapshot(pid).unwrap().is_empty());
}

#[test]
fn json_export_round_trips_through_evaluation() {
    let svc = service(3);
    let pid = project(&svc, 3);
    let b = svc.run_batch(pid, Phase::Pilot, &ids(0..3)).unwrap();
    svc.apply_edit(&b.records[0].record_id, "Dataset", "D0, test split", "a").unwrap();
    let json = String::from_utf8(svc.export(pid, ExportFormat::Json, false).unwrap()).unwrap();
    let dump = TableDump::parse(&json).unwrap();
    let report = evaluate_dataset(&dump, &dump, EvalOptions::default()).unwrap();
    assert_eq!(report.aggregate.f1, 100.0);
    assert_eq!(report.aggregate.chrf, 100.0);
    let csv = String::from_utf8(svc.export(pid, ExportFormat::Csv, false).unwrap()).unwrap();
    assert!(csv.contains("doc0,M0,\"D0, test split\",\r\n"));
}

#[test]
fn export_takes_each_document_from_its_latest_batch() {
    let svc = service(2);
    let pid = project(&svc, 2);
    let first = svc.run_batch(pid, Phase::Pilot, &ids(0..2)).unwrap();
    svc.lock_record(&first.records[1].record_id, "a").unwrap();
    // doc0 re-run with doc1 in the pool: the newer answer carries a score
    svc.run_batch(pid, Phase::Batch, &ids(0..1)).unwrap();
    let csv = String::from_utf8(svc.export(pid, ExportFormat::Csv, false).unwrap()).unwrap();
    assert_eq!(csv, "doc_id,Model,Dataset,Score\r\ndoc0,M0,D0,01.5\r\ndoc1,M1,D1,\r\n");
}

#[test]
fn schema_changes_retire_and_restore_columns() {
    let svc = service(1);
    let pid = project(&svc, 1);
    let b = svc.run_batch(pid, Phase::Pilot, &ids(0..1)).unwrap();
    let rid = &b.records[0].record_id;
    svc.lock_record(rid, "a").unwrap();

    let s2 = svc.update_schema(pid, "Model,Score,Venue").unwrap();
    assert_eq!(s2.version(), 2);
    let r = svc.get_record(rid).unwrap();
    assert_eq!(r.cells.keys().collect::<Vec<_>>(), ["Model", "Score", "Venue"]);
    assert_eq!(r.retired.get("Dataset").map(String::as_str), Some("D0"));
    let csv = String::from_utf8(svc.export(pid, ExportFormat::Csv, false).unwrap()).unwrap();
    assert_eq!(csv, "doc_id,Model,Score,Venue,retired:Dataset\r\ndoc0,M0,,,D0\r\n");
    let pool = svc.pool_snapshot(pid).unwrap();
    let pooled = &pool.entries()[0].records[0].values;
    assert_eq!(pooled.iter().map(|(k, _)| k).collect::<Vec<_>>(), ["Model", "Score", "Venue"]);

    svc.update_schema(pid, "Model,Dataset,Score").unwrap();
    let r = svc.get_record(rid).unwrap();
    assert_eq!(r.value("Dataset"), Some("D0"));
    assert!(r.retired.contains_key("Venue") && !r.retired.contains_key("Dataset"));
}

#[test]
fn support_and_explanations_are_audited() {
    let svc = service(1);
    let pid = project(&svc, 1);
    let b = svc.run_batch(pid, Phase::Pilot, &ids(0..1)).unwrap();
    let rid = &b.records[0].record_id;

    let top = svc.support(rid, Some("Dataset"), 3, "dana").unwrap();
    assert_eq!(top.len(), 3);
    assert!(top[0].highlighted.contains("**D0**"));
    assert!(matches!(svc.support(rid, Some("Nope"), 3, "dana"), Err(StoreError::UnknownColumn(_))));

    let ex = svc.explain(rid, "Dataset", "dana").unwrap();
    assert_eq!(ex.response, "Model M0 reaches 01.5 F1 on Dataset D0");
    assert_eq!(svc.get_record(rid).unwrap(), b.records[0], "explanations never touch the record");

    let events = svc.audit_log(pid).unwrap();
    assert_eq!(events.len(), 2);
    assert_eq!(events[0].kind, AuditKind::VettingViewed);
    assert_eq!(events[1].kind, AuditKind::ExplanationRequested);
    assert_eq!(events[1].after.as_deref(), Some(ex.response.as_str()));

    let prov = svc.provenance(rid).unwrap();
    assert_eq!(prov.len(), 3);
    assert_eq!(prov["Score"].as_ref().unwrap().band, Band::Unsupported);
}

#[test]
fn state_persists_across_reopen() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("curate.db");
    let llm: Arc<dyn LlmProvider> = Arc::new(MockLlm::new(fixture(1)));
    let rid = {
        let svc = CurationService::open(&path, EngineConfig::default(), backends(llm.clone())).unwrap();
        let pid = project(&svc, 1);
        let b = svc.run_batch(pid, Phase::Pilot, &ids(0..1)).unwrap();
        svc.lock_record(&b.records[0].record_id, "a").unwrap();
        b.records[0].record_id.clone()
    };
    let svc = CurationService::open(&path, EngineConfig::default(), backends(llm)).unwrap();
    assert_eq!(svc.get_record(&rid).unwrap().status, RecordStatus::Locked);
    assert_eq!(svc.get_project(1).unwrap().pool_version, 1);
}

/// Blocks the first call whose article mentions `needle` until released.
struct GatedLlm {
    inner: MockLlm,
    needle: String,
    entered: Mutex<Option<Sender<()>>>,
    release: Mutex<Option<Receiver<()>>>,
}

impl LlmProvider for GatedLlm {
    fn name(&self) -> &str {
        "gated"
    }
    fn context_chars(&self) -> usize {
        self.inner.context_chars()
    }
    fn complete(&self, prompt: &str) -> Result<String, LlmError> {
        if prompt.contains(&self.needle) {
            if let Some(tx) = self.entered.lock().unwrap().take() {
                tx.send(()).unwrap();
                let rx = self.release.lock().unwrap().take().unwrap();
                rx.recv().unwrap();
            }
        }
        self.inner.complete(prompt)
    }
}

#[test]
fn mid_batch_lock_does_not_reach_the_running_batch() {
    let (entered_tx, entered_rx) = channel();
    let (release_tx, release_rx) = channel();
    let llm = Arc::new(GatedLlm {
        inner: MockLlm::new(fixture(3)),
        needle: "Model M2 reaches".into(),
        entered: Mutex::new(Some(entered_tx)),
        release: Mutex::new(Some(release_rx)),
    });
    let svc = Arc::new(service_with(llm, EngineConfig::default()));
    let pid = project(&svc, 3);
    let pilot = svc.run_batch(pid, Phase::Pilot, &ids(0..1)).unwrap();

    let worker = {
        let svc = svc.clone();
        std::thread::spawn(move || svc.run_batch(pid, Phase::Batch, &ids(1..3)).unwrap())
    };
    entered_rx.recv().unwrap();
    svc.lock_record(&pilot.records[0].record_id, "eve").unwrap();
    assert_eq!(svc.pool_snapshot(pid).unwrap().version(), 1);
    release_tx.send(()).unwrap();

    let batch = worker.join().unwrap();
    assert_eq!(batch.summary.pool_version_used, 0);
    assert!(batch.records.iter().all(|r| r.value("Score") == Some("")));
    let next = svc.run_batch(pid, Phase::Batch, &ids(2..3)).unwrap();
    assert_eq!(next.summary.pool_version_used, 1);
    assert_eq!(next.records[0].value("Score"), Some("21.5"));
}

#[derive(Debug, Clone)]
enum Op {
    Edit(usize, usize, String),
    Lock(usize),
    Unlock(usize),
    Mark(usize),
    Unmark(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..3usize, 0..3usize, "[a-z0-9 ]{0,6}").prop_map(|(r, c, v)| Op::Edit(r, c, v)),
        (0..3usize).prop_map(Op::Lock),
        (0..3usize).prop_map(Op::Unlock),
        (0..3usize).prop_map(Op::Mark),
        (0..3usize).prop_map(Op::Unmark),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn status_machine_pool_and_audit_replay(ops in prop::collection::vec(op(), 1..25)) {
        use RecordStatus::*;
        let svc = service(3);
        let pid = project(&svc, 3);
        let b = svc.run_batch(pid, Phase::Pilot, &ids(0..3)).unwrap();
        let rids: Vec<String> = b.records.iter().map(|r| r.record_id.clone()).collect();
        let cols = ["Model", "Dataset", "Score"];
        let mut status = vec![Generated; 3];
        let mut edited = [false; 3];

        for o in &ops {
            let (r, res, expect) = match o {
                Op::Edit(r, c, v) => {
                    let ok = matches!(status[*r], Generated | Edited);
                    (*r, svc.apply_edit(&rids[*r], cols[*c], v, "p"), ok.then_some(Edited))
                }
                Op::Lock(r) => {
                    let ok = matches!(status[*r], Generated | Edited);
                    (*r, svc.lock_record(&rids[*r], "p"), ok.then_some(Locked))
                }
                Op::Unlock(r) => (*r, svc.unlock_record(&rids[*r], "p"), (status[*r] == Locked).then_some(Edited)),
                Op::Mark(r) => {
                    let ok = status[*r] != Locked;
                    (*r, svc.mark_irrelevant(&rids[*r], "p"), ok.then_some(Irrelevant))
                }
                Op::Unmark(r) => {
                    let back = if edited[*r] { Edited } else { Generated };
                    (*r, svc.unmark_irrelevant(&rids[*r], "p"), (status[*r] == Irrelevant).then_some(back))
                }
            };
            match (res, expect) {
                (Ok(rec), Some(s)) => {
                    prop_assert_eq!(rec.status, s);
                    status[r] = s;
                    if matches!(o, Op::Edit(..)) {
                        edited[r] = true;
                    }
                }
                (Err(e), None) => {
                    let guarded = matches!(
                        e,
                        StoreError::InvalidTransition { .. } | StoreError::RecordLocked(_) | StoreError::AlreadyLocked(_)
                    );
                    prop_assert!(guarded, "unexpected error {}", e);
                }
                (res, expect) => {
                    let got = res.map(|r| r.status);
                    prop_assert!(false, "{:?} gave {:?}, expected {:?}", o, got, expect);
                }
            }

            let pool = svc.pool_snapshot(pid).unwrap();
            let pooled: HashSet<&str> = pool.entries().iter().flat_map(|e| e.records.iter().map(|r| r.record_id.as_str())).collect();
            let locked: HashSet<&str> = rids.iter().zip(&status).filter(|(_, s)| **s == Locked).map(|(id, _)| id.as_str()).collect();
            prop_assert_eq!(pooled, locked);
        }

        let replayed = svc.replay_audit(pid).unwrap();
        let events = svc.audit_log(pid).unwrap();
        for id in &rids {
            let rec = svc.get_record(id).unwrap();
            prop_assert_eq!(&replayed[id], &rec.values());
            for (col, cell) in &rec.cells {
                if cell.edited {
                    prop_assert!(events.iter().any(|e| e.kind == AuditKind::UpdatingValue
                        && e.record_id.as_deref() == Some(id.as_str())
                        && e.column.as_deref() == Some(col.as_str())));
                }
            }
        }
        let ids: Vec<i64> = events.iter().map(|e| e.event_id).collect();
        prop_assert!(ids.windows(2).all(|w| w[0] < w[1]));
    }
}
