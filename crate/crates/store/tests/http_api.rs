mod common;

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use common::*;
use curate_store::http::router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(n: usize, token: Option<&str>) -> Router {
    router(Arc::new(service(n)), token.map(str::to_string))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Vec<u8>) {
    let mut req = Request::builder().method(method).uri(uri).header("x-actor", "tester");
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    (status, resp.into_body().collect().await.unwrap().to_bytes().to_vec())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, b) = call(app, method, uri, body).await;
    (s, serde_json::from_slice(&b).unwrap_or(Value::Null))
}

fn docs(n: usize) -> Value {
    Value::Array((0..n).map(|i| json!({"doc_id": format!("doc{i}"), "content": tei(i)})).collect())
}

#[tokio::test]
async fn full_curation_flow() {
    let app = app(3, None);
    let (s, p) = call_json(&app, "POST", "/projects", Some(json!({"name": "p", "schema": SCHEMA}))).await;
    assert_eq!(s, StatusCode::CREATED);
    let pid = p["project_id"].as_i64().unwrap();

    let (s, d) = call_json(&app, "POST", &format!("/projects/{pid}/documents"), Some(json!({"documents": docs(3)}))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(d["documents"].as_array().unwrap().len(), 3);

    let (s, b) = call_json(
        &app,
        "POST",
        &format!("/projects/{pid}/batches"),
        Some(json!({"phase": "PILOT", "doc_ids": ["doc0", "doc1"]})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(b["phase"], "PILOT");
    assert_eq!(b["seq"], 1);
    let bid = b["batch_id"].as_i64().unwrap();
    let rid = b["records"][0]["record_id"].as_str().unwrap().to_string();

    let (s, same) = call_json(&app, "GET", &format!("/batches/{bid}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(same, b);

    let (s, r) = call_json(
        &app,
        "PATCH",
        &format!("/records/{rid}/cells/Score"),
        Some(json!({"value": "01.5"})),
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(r["status"], "EDITED");
    assert_eq!(r["cells"]["Score"]["edited"], true);

    let (s, r) = call_json(&app, "POST", &format!("/records/{rid}/lock"), None).await;
    assert_eq!((s, r["status"].as_str()), (StatusCode::OK, Some("LOCKED")));
    let (s, e) = call_json(&app, "POST", &format!("/records/{rid}/lock"), None).await;
    assert_eq!((s, e["error"].as_str()), (StatusCode::CONFLICT, Some("AlreadyLocked")));
    let (s, e) = call_json(&app, "PATCH", &format!("/records/{rid}/cells/Score"), Some(json!({"value": "x"}))).await;
    assert_eq!((s, e["error"].as_str()), (StatusCode::CONFLICT, Some("RecordLocked")));

    let (s, prov) = call_json(&app, "GET", &format!("/records/{rid}/provenance"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(prov["Model"]["band"], "SUPPORTED");
    assert_eq!(prov["Model"]["ratio"], 100);

    let (s, sup) = call_json(&app, "GET", &format!("/records/{rid}/support?column=Dataset&k=3"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(sup["paragraphs"].as_array().unwrap().len(), 3);

    let (s, ex) = call_json(&app, "POST", &format!("/records/{rid}/explain"), Some(json!({"column": "Dataset"}))).await;
    assert_eq!(s, StatusCode::OK);
    assert!(ex["response"].as_str().unwrap().contains("D0"));

    let other = b["records"][1]["record_id"].as_str().unwrap();
    let (s, r) = call_json(&app, "POST", &format!("/records/{other}/irrelevant"), None).await;
    assert_eq!((s, r["status"].as_str()), (StatusCode::OK, Some("IRRELEVANT")));

    let (s, b2) = call_json(
        &app,
        "POST",
        &format!("/projects/{pid}/batches"),
        Some(json!({"phase": "BATCH", "doc_ids": ["doc2"]})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(b2["pool_version_used"], 1);
    assert_eq!(b2["records"][0]["cells"]["Score"]["value"], "21.5");

    let (s, csv) = call(&app, "GET", &format!("/projects/{pid}/export?format=csv"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(
        String::from_utf8(csv).unwrap(),
        "doc_id,Model,Dataset,Score\r\ndoc0,M0,D0,01.5\r\ndoc2,M2,D2,21.5\r\n"
    );
    let (s, dump) = call_json(&app, "GET", &format!("/projects/{pid}/export?format=json&include_irrelevant=true"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(dump["documents"].as_array().unwrap().len(), 3);

    let (s, audit) = call_json(&app, "GET", &format!("/projects/{pid}/audit"), None).await;
    assert_eq!(s, StatusCode::OK);
    let kinds: Vec<&str> = audit["events"].as_array().unwrap().iter().map(|e| e["kind"].as_str().unwrap()).collect();
    assert_eq!(
        kinds,
        ["UPDATING_VALUE", "LOCKING_DATA", "VETTING_VIEWED", "EXPLANATION_REQUESTED", "SETTING_IRRELEVANT"]
    );
    assert!(audit["events"].as_array().unwrap().iter().all(|e| e["actor"] == "tester"));

    let (s, view) = call_json(&app, "GET", &format!("/projects/{pid}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(view["batches"].as_array().unwrap().len(), 2);
    assert_eq!(view["pool_version"], 1);
}

#[tokio::test]
async fn errors_map_to_status_codes() {
    let app = app(11, None);
    let (s, e) = call_json(&app, "GET", "/projects/99", None).await;
    assert_eq!((s, e["error"].as_str()), (StatusCode::NOT_FOUND, Some("ProjectNotFound")));
    let (s, _) = call_json(&app, "GET", "/records/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, e) = call_json(&app, "POST", "/projects", Some(json!({"name": "p", "schema": "{bad"}))).await;
    assert_eq!((s, e["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("SchemaParseError")));

    let (_, p) = call_json(&app, "POST", "/projects", Some(json!({"name": "p", "schema": SCHEMA, "documents": docs(11)}))).await;
    let pid = p["project_id"].as_i64().unwrap();
    let (s, _) = call_json(&app, "POST", "/projects", Some(json!({"name": "p", "schema": SCHEMA}))).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (s, e) = call_json(&app, "GET", &format!("/projects/{pid}/export?format=csv"), None).await;
    assert_eq!((s, e["error"].as_str()), (StatusCode::CONFLICT, Some("NoBatches")));

    let all: Vec<String> = (0..11).map(|i| format!("doc{i}")).collect();
    let (s, e) = call_json(
        &app,
        "POST",
        &format!("/projects/{pid}/batches"),
        Some(json!({"phase": "PILOT", "doc_ids": all})),
    )
    .await;
    assert_eq!((s, e["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("PilotCapExceeded")));
    let (s, e) = call_json(
        &app,
        "POST",
        &format!("/projects/{pid}/batches"),
        Some(json!({"phase": "PILOT", "doc_ids": ["ghost"]})),
    )
    .await;
    assert_eq!((s, e["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("DocsNotIngested")));

    let (_, b) = call_json(
        &app,
        "POST",
        &format!("/projects/{pid}/batches"),
        Some(json!({"phase": "PILOT", "doc_ids": ["doc0"]})),
    )
    .await;
    let rid = b["records"][0]["record_id"].as_str().unwrap();
    let (s, e) = call_json(&app, "PATCH", &format!("/records/{rid}/cells/Nope"), Some(json!({"value": "x"}))).await;
    assert_eq!((s, e["error"].as_str()), (StatusCode::UNPROCESSABLE_ENTITY, Some("UnknownColumn")));
    let (s, e) = call_json(&app, "DELETE", &format!("/records/{rid}/lock"), None).await;
    assert_eq!((s, e["error"].as_str()), (StatusCode::CONFLICT, Some("InvalidTransition")));
}

#[tokio::test]
async fn bearer_token_is_enforced_when_configured() {
    let app = app(0, Some("s3cret"));
    let (s, e) = call_json(&app, "GET", "/projects/1", None).await;
    assert_eq!((s, e["error"].as_str()), (StatusCode::UNAUTHORIZED, Some("Unauthorized")));
    let req = Request::get("/projects/1")
        .header("authorization", "Bearer s3cret")
        .body(Body::empty())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    assert_eq!(resp.status(), StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn serves_over_tcp() {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let svc = Arc::new(service(0));
    tokio::spawn(curate_store::http::serve(listener, svc, None));
    let mut stream = tokio::net::TcpStream::connect(addr).await.unwrap();
    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    stream
        .write_all(b"GET /projects/7 HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut out = String::new();
    stream.read_to_string(&mut out).await.unwrap();
    assert!(out.starts_with("HTTP/1.1 404"), "{out}");
    assert!(out.contains("ProjectNotFound"));
}
