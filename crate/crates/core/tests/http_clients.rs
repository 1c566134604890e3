//! The HTTP clients against in-process mock servers.

use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::{post, put};
use axum::{Json, Router};
use curate_core::aligner::{EmbedError, EmbeddingProvider, HttpEmbedder};
use curate_core::generator::{HttpLlm, LlmError, LlmProvider};
use curate_core::ingest::{HttpParserService, IngestError, ParserKind, ParserService};
use serde_json::{json, Value};

/// Serve `app` on an ephemeral port from a background runtime.
fn spawn(app: Router) -> SocketAddr {
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Runtime::new().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    rx.recv().unwrap()
}

const TEI: &str = r#"<TEI xmlns="http://www.tei-c.org/ns/1.0"><text><body><div><head>Intro</head><p>First  paragraph.</p><p>Second.</p></div></body></text></TEI>"#;

#[test]
fn grobid_and_tika_contracts() {
    let seen = Arc::new(Mutex::new(Vec::<String>::new()));
    let s1 = seen.clone();
    let s2 = seen.clone();
    let app = Router::new()
        .route(
            "/api/processFulltextDocument",
            post(move |headers: HeaderMap, body: Bytes| {
                let seen = s1.clone();
                async move {
                    let ct = headers["content-type"].to_str().unwrap().to_string();
                    assert!(ct.starts_with("multipart/form-data"));
                    let body = String::from_utf8_lossy(&body).into_owned();
                    assert!(body.contains("name=\"input\""));
                    assert!(body.contains("%PDF-fake"));
                    seen.lock().unwrap().push("grobid".into());
                    TEI
                }
            }),
        )
        .route(
            "/tika",
            put(move |headers: HeaderMap, body: Bytes| {
                let seen = s2.clone();
                async move {
                    assert_eq!(headers["accept"], "text/plain");
                    assert_eq!(&body[..], b"%PDF-fake");
                    seen.lock().unwrap().push("tika".into());
                    "Line one\n\n\nLine two\n"
                }
            }),
        );
    let addr = spawn(app);
    let svc = HttpParserService::new(Some(format!("http://{addr}/")), Some(format!("http://{addr}")));
    assert_eq!(
        svc.extract(b"%PDF-fake", ParserKind::StructuredTei).unwrap(),
        ["Intro", "First paragraph.", "Second."]
    );
    assert_eq!(svc.extract(b"%PDF-fake", ParserKind::GenericText).unwrap(), ["Line one", "Line two"]);
    assert_eq!(*seen.lock().unwrap(), ["grobid", "tika"]);
}

#[test]
fn parser_errors_become_service_unavailable() {
    let app = Router::new().route("/tika", put(|| async { (StatusCode::SERVICE_UNAVAILABLE, "busy") }));
    let addr = spawn(app);
    let svc = HttpParserService::new(None, Some(format!("http://{addr}")));
    assert!(matches!(
        svc.extract(b"x", ParserKind::GenericText),
        Err(IngestError::ServiceUnavailable { kind: ParserKind::GenericText, reason }) if reason.contains("503")
    ));
    assert!(matches!(
        svc.extract(b"x", ParserKind::StructuredTei),
        Err(IngestError::ServiceUnavailable { kind: ParserKind::StructuredTei, .. })
    ));
}

#[test]
fn chat_completions_contract() {
    let app = Router::new().route(
        "/v1/chat/completions",
        post(|headers: HeaderMap, Json(body): Json<Value>| async move {
            assert_eq!(headers["authorization"], "Bearer tok");
            assert_eq!(body["model"], "m1");
            assert_eq!(body["temperature"], 0);
            let prompt = body["messages"][0]["content"].as_str().unwrap().to_string();
            if prompt == "fail" {
                return (StatusCode::TOO_MANY_REQUESTS, Json(json!({"error": "slow down"})));
            }
            if prompt == "empty" {
                return (StatusCode::OK, Json(json!({"choices": []})));
            }
            (
                StatusCode::OK,
                Json(json!({"choices": [{"message": {"role": "assistant", "content": format!("echo: {prompt}")}}]})),
            )
        }),
    );
    let addr = spawn(app);
    let llm = HttpLlm::new(format!("http://{addr}/v1/"), "m1", Some("tok".into()), 4000);
    assert_eq!(llm.name(), "m1");
    assert_eq!(llm.context_chars(), 4000);
    assert_eq!(llm.complete("hi").unwrap(), "echo: hi");
    assert!(matches!(llm.complete("fail"), Err(LlmError::Status { status: 429, .. })));
    assert!(matches!(llm.complete("empty"), Err(LlmError::EmptyResponse)));

    let dead = HttpLlm::new("http://127.0.0.1:9", "m1", None, 10);
    assert!(matches!(dead.complete("hi"), Err(LlmError::Transport(_))));
}

#[test]
fn embedding_contract() {
    let app = Router::new()
        .route(
            "/embed",
            post(|Json(texts): Json<Vec<String>>| async move {
                Json(texts.iter().map(|t| vec![t.len() as f64, 1.0]).collect::<Vec<_>>())
            }),
        )
        .route("/short", post(|| async { Json(vec![vec![1.0, 2.0]]) }))
        .route("/wide", post(|Json(t): Json<Vec<String>>| async move { Json(vec![vec![1.0, 2.0, 3.0]; t.len()]) }));
    let addr = spawn(app);
    let e = HttpEmbedder::new(format!("http://{addr}/embed"), 2);
    let v = e.embed_batch(&["abc".into(), "hello".into()]).unwrap();
    assert_eq!(v, vec![vec![3.0, 1.0], vec![5.0, 1.0]]);
    assert!(e.embed_batch(&[]).unwrap().is_empty());

    let short = HttpEmbedder::new(format!("http://{addr}/short"), 2);
    assert!(matches!(short.embed_batch(&["a".into(), "b".into()]), Err(EmbedError::Service(_))));
    let wide = HttpEmbedder::new(format!("http://{addr}/wide"), 2);
    assert!(matches!(
        wide.embed_batch(&["a".into()]),
        Err(EmbedError::Dimension { expected: 2, got: 3 })
    ));
}
