use std::path::Path;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use dam_core::agents::Engine;
use dam_core::clock::LogicalClock;
use dam_core::prompt::Prompt;
use dam_core::providers::{ChatProvider, MockChat, MockEmbedder};
use dam_core::service::{router, session_path, AppState};
use dam_core::{Config, MemoryStore};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Value) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req.header(header::CONTENT_TYPE, "application/json").body(Body::from(b.to_string())),
        None => req.body(Body::empty()),
    };
    send(app, req.unwrap()).await
}

fn app_with(config: Config) -> Router {
    let state = Arc::new(AppState::new(Engine::from_config(config).unwrap()));
    state.load_existing().unwrap();
    router(state)
}

fn app_in(dir: &Path) -> Router {
    app_with(Config { store_dir: dir.to_path_buf(), ..Config::default() })
}

async fn create(app: &Router) -> String {
    let (status, body) = call(app, "POST", "/v1/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    body["session_id"].as_str().unwrap().to_string()
}

async fn chat(app: &Router, id: &str, text: &str) -> (StatusCode, Value) {
    call(app, "POST", &format!("/v1/sessions/{id}/chat"), Some(json!({ "text": text }))).await
}

#[tokio::test]
async fn unknown_session_is_404_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_in(dir.path());
    for (method, path, body) in [
        ("POST", "/v1/sessions/missing/chat", Some(json!({"text": "hi"}))),
        ("GET", "/v1/sessions/missing/memories", None),
        ("GET", "/v1/sessions/missing/metrics", None),
        ("POST", "/v1/sessions/missing/compact", None),
    ] {
        let (status, body) = call(&app, method, path, body).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{method} {path}");
        assert!(body["error"].as_str().unwrap().contains("missing"));
    }
}

#[tokio::test]
async fn malformed_chat_body_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_in(dir.path());
    let id = create(&app).await;
    let (status, _) = call(&app, "POST", &format!("/v1/sessions/{id}/chat"), Some(json!({"message": "hi"}))).await;
    assert!(status.is_client_error());
    let (status, body) = chat(&app, &id, "").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body, json!({"error": "text is empty"}));
}

#[tokio::test]
async fn bearer_token_guards_sessions_but_not_health() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(Config {
        store_dir: dir.path().to_path_buf(),
        service_token: Some("s3cret".into()),
        ..Config::default()
    });
    let (status, _) = call(&app, "GET", "/v1/health", None).await;
    assert_eq!(status, StatusCode::OK);
    let (status, _) = call(&app, "POST", "/v1/sessions", None).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    let wrong = Request::post("/v1/sessions").header(header::AUTHORIZATION, "Bearer nope").body(Body::empty()).unwrap();
    assert_eq!(send(&app, wrong).await.0, StatusCode::UNAUTHORIZED);
    let right =
        Request::post("/v1/sessions").header(header::AUTHORIZATION, "Bearer s3cret").body(Body::empty()).unwrap();
    assert_eq!(send(&app, right).await.0, StatusCode::CREATED);
}

#[tokio::test]
async fn sessions_survive_restart() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_in(dir.path());
    let id = create(&app).await;
    assert_eq!(chat(&app, &id, "I love the coffee").await.0, StatusCode::OK);
    assert_eq!(chat(&app, &id, "The tea is terrible").await.0, StatusCode::OK);
    let (_, before) = call(&app, "GET", &format!("/v1/sessions/{id}/memories"), None).await;
    // a foreign file in the directory is ignored
    std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
    std::fs::write(dir.path().join("broken.damstore"), "garbage\n").unwrap();

    let restarted = app_in(dir.path());
    let (status, after) = call(&restarted, "GET", &format!("/v1/sessions/{id}/memories"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(before, after);
    assert_eq!(after.as_array().unwrap().len(), 2);
    let (status, _) = call(&restarted, "GET", "/v1/sessions/broken/metrics", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn memories_sorted_newest_first_and_filterable() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_in(dir.path());
    let id = create(&app).await;
    for t in ["I love the coffee", "I like the tea", "The pizza is awful", "I hate the coffee price"] {
        assert_eq!(chat(&app, &id, t).await.0, StatusCode::OK);
    }
    let (_, all) = call(&app, "GET", &format!("/v1/sessions/{id}/memories"), None).await;
    let keys: Vec<&str> = all.as_array().unwrap().iter().map(|u| u["key"].as_str().unwrap()).collect();
    assert_eq!(keys, ["coffee/price", "pizza/overall", "tea/overall", "coffee/overall"]);
    for u in all.as_array().unwrap() {
        assert!(u.get("embedding").is_none());
        for field in ["profile", "weight", "entropy", "band", "summary", "updated_at", "high_entropy_streak"] {
            assert!(u.get(field).is_some(), "missing {field}");
        }
    }
    let (_, bev) = call(&app, "GET", &format!("/v1/sessions/{id}/memories?object_type=beverage"), None).await;
    assert_eq!(bev.as_array().unwrap().len(), 3);
    let (_, price) = call(&app, "GET", &format!("/v1/sessions/{id}/memories?aspect=price"), None).await;
    assert_eq!(price.as_array().unwrap().len(), 1);
    let (_, blank) = call(&app, "GET", &format!("/v1/sessions/{id}/memories?object_type=&aspect="), None).await;
    assert_eq!(blank, all);
}

#[tokio::test]
async fn concurrent_turns_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_in(dir.path());
    let shared = create(&app).await;
    let serial = create(&app).await;
    let mut tasks = Vec::new();
    for _ in 0..8 {
        let (app, id) = (app.clone(), shared.clone());
        tasks.push(tokio::spawn(async move { chat(&app, &id, "I love the coffee").await }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap().0, StatusCode::OK);
    }
    for _ in 0..8 {
        chat(&app, &serial, "I love the coffee").await;
    }
    let weight = |v: &Value| v[0]["weight"].as_f64().unwrap();
    let (_, a) = call(&app, "GET", &format!("/v1/sessions/{shared}/memories"), None).await;
    let (_, b) = call(&app, "GET", &format!("/v1/sessions/{serial}/memories"), None).await;
    assert!((weight(&a) - weight(&b)).abs() < 1e-9, "{a} vs {b}");
    let on_disk = MemoryStore::load(&session_path(dir.path(), &shared)).unwrap();
    assert!((on_disk.units().next().unwrap().weight - weight(&a)).abs() < 1e-12);
}

/// Chat provider that blocks every call until the gate opens.
struct GatedChat {
    entered: AtomicBool,
    gate: (Mutex<bool>, Condvar),
}

impl ChatProvider for GatedChat {
    fn complete(&self, prompt: &Prompt) -> dam_core::Result<String> {
        self.entered.store(true, Ordering::SeqCst);
        let (lock, cv) = &self.gate;
        let mut open = lock.lock().unwrap();
        while !*open {
            open = cv.wait(open).unwrap();
        }
        MockChat::new().complete(prompt)
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn full_queue_answers_429() {
    let dir = tempfile::tempdir().unwrap();
    let chat_provider =
        Arc::new(GatedChat { entered: AtomicBool::new(false), gate: (Mutex::new(false), Condvar::new()) });
    let config = Config { store_dir: dir.path().to_path_buf(), queue_depth: 1, ..Config::default() };
    let engine = Engine::with_providers(
        config,
        chat_provider.clone(),
        Arc::new(MockEmbedder::new(256)),
        Arc::new(LogicalClock::default()),
    );
    let app = router(Arc::new(AppState::new(engine)));
    let id = create(&app).await;

    let (a, i) = (app.clone(), id.clone());
    let first = tokio::spawn(async move { chat(&a, &i, "I love the coffee").await });
    while !chat_provider.entered.load(Ordering::SeqCst) {
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    let (status, body) = chat(&app, &id, "I like the tea").await;
    assert_eq!(status, StatusCode::TOO_MANY_REQUESTS, "{body}");
    // reads are not queued behind the running turn
    let (status, m) = call(&app, "GET", &format!("/v1/sessions/{id}/metrics"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(m["unit_count"], 0);

    {
        let (lock, cv) = &chat_provider.gate;
        *lock.lock().unwrap() = true;
        cv.notify_all();
    }
    assert_eq!(first.await.unwrap().0, StatusCode::OK);
    let (status, _) = chat(&app, &id, "I like the tea").await;
    assert_eq!(status, StatusCode::OK);
    let (_, m) = call(&app, "GET", &format!("/v1/sessions/{id}/metrics"), None).await;
    assert_eq!(m["unit_count"], 2);
}

#[tokio::test]
async fn compact_on_healthy_store_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_in(dir.path());
    let id = create(&app).await;
    chat(&app, &id, "I love the coffee").await;
    let path = session_path(dir.path(), &id);
    let before = std::fs::read(&path).unwrap();
    let (status, body) = call(&app, "POST", &format!("/v1/sessions/{id}/compact"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"actions": []}));
    assert_eq!(std::fs::read(&path).unwrap(), before);
}

#[tokio::test]
async fn chat_response_schema() {
    let dir = tempfile::tempdir().unwrap();
    let app = app_in(dir.path());
    let id = create(&app).await;
    let (status, body) = chat(&app, &id, "I really love the taste of coffee").await;
    assert_eq!(status, StatusCode::OK);
    for field in ["response", "routing", "actions", "warnings", "unit_count", "global_entropy"] {
        assert!(body.get(field).is_some(), "missing {field}");
    }
    let action = &body["actions"][0];
    assert_eq!(action["kind"], "CreateNew");
    assert_eq!(action["targets"], json!([{"object_id": "coffee", "aspect": "taste"}]));
    assert_eq!(action["result"]["summary"], "I really love the taste of coffee");
    assert_eq!(body["unit_count"], 1);
}
