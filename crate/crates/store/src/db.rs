//! SQLite schema and versioned migrations.

use rusqlite::Connection;

use crate::StoreError;

const MIGRATIONS: &[&str] = &[
    // 1: initial layout
    "CREATE TABLE projects (
        project_id    INTEGER PRIMARY KEY AUTOINCREMENT,
        name          TEXT NOT NULL UNIQUE,
        schema_json   TEXT NOT NULL,
        pool_json     TEXT NOT NULL,
        created_at    TEXT NOT NULL
    );
    CREATE TABLE documents (
        seq           INTEGER PRIMARY KEY AUTOINCREMENT,
        project_id    INTEGER NOT NULL REFERENCES projects(project_id),
        doc_id        TEXT NOT NULL,
        parsed_json   TEXT NOT NULL,
        failed        INTEGER NOT NULL,
        UNIQUE (project_id, doc_id)
    );
    CREATE TABLE batches (
        batch_id          INTEGER PRIMARY KEY AUTOINCREMENT,
        project_id        INTEGER NOT NULL REFERENCES projects(project_id),
        seq               INTEGER NOT NULL,
        phase             TEXT NOT NULL,
        doc_ids_json      TEXT NOT NULL,
        pool_version_used INTEGER NOT NULL,
        failures_json     TEXT NOT NULL,
        created_at        TEXT NOT NULL,
        UNIQUE (project_id, seq)
    );
    CREATE TABLE records (
        record_id     TEXT PRIMARY KEY,
        project_id    INTEGER NOT NULL REFERENCES projects(project_id),
        batch_id      INTEGER NOT NULL REFERENCES batches(batch_id),
        position      INTEGER NOT NULL,
        doc_id        TEXT NOT NULL,
        status        TEXT NOT NULL,
        record_json   TEXT NOT NULL,
        initial_json  TEXT NOT NULL
    );
    CREATE INDEX records_by_batch ON records(batch_id, position);
    CREATE TABLE audit (
        event_id      INTEGER PRIMARY KEY AUTOINCREMENT,
        project_id    INTEGER NOT NULL REFERENCES projects(project_id),
        actor         TEXT NOT NULL,
        kind          TEXT NOT NULL,
        record_id     TEXT,
        column_name   TEXT,
        before_value  TEXT,
        after_value   TEXT,
        created_at    TEXT NOT NULL
    );
    CREATE INDEX audit_by_project ON audit(project_id, event_id);
    CREATE TRIGGER audit_no_update BEFORE UPDATE ON audit
        BEGIN SELECT RAISE(ABORT, 'audit log is append-only'); END;
    CREATE TRIGGER audit_no_delete BEFORE DELETE ON audit
        BEGIN SELECT RAISE(ABORT, 'audit log is append-only'); END;",
];

pub fn migrate(conn: &mut Connection) -> Result<(), StoreError> {
    conn.pragma_update(None, "foreign_keys", "ON")?;
    let current: usize = conn.pragma_query_value(None, "user_version", |r| r.get(0))?;
    for (i, sql) in MIGRATIONS.iter().enumerate().skip(current) {
        let tx = conn.transaction()?;
        tx.execute_batch(sql)?;
        tx.pragma_update(None, "user_version", i + 1)?;
        tx.commit()?;
        log::info!("store migrated to version {}", i + 1);
    }
    Ok(())
}

pub fn schema_version(conn: &Connection) -> Result<usize, StoreError> {
    Ok(conn.pragma_query_value(None, "user_version", |r| r.get(0))?)
}
