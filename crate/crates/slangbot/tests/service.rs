mod common;

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use proptest::prelude::*;
use serde_json::{json, Value};
use slangbot::service::{app, AppState, AtomicClock, ChatResponse, Health, SessionCreated, SessionStore};
use slangbot_core::router::{parse_log, Route};
use tower::ServiceExt;

const LIMIT: usize = 4096;

fn state(clock: Arc<AtomicClock>) -> Arc<AppState> {
    Arc::new(AppState::new(1800, clock).with_engine(common::fixture_engine()))
}

async fn send(app: &Router, method: &str, uri: &str, body: Body) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json").body(body).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn new_session(app: &Router) -> String {
    let (status, body) = send(app, "POST", "/sessions", Body::empty()).await;
    assert_eq!(status, StatusCode::CREATED);
    serde_json::from_value::<SessionCreated>(body).unwrap().session_id
}

async fn chat(app: &Router, id: &str, text: &str) -> (StatusCode, Value) {
    send(app, "POST", "/chat", Body::from(json!({"session_id": id, "text": text}).to_string())).await
}

#[tokio::test]
async fn sessions_are_distinct_and_start_empty() {
    let st = state(Arc::new(AtomicClock::new(0)));
    let app = app(st.clone(), LIMIT);
    let a = new_session(&app).await;
    let b = new_session(&app).await;
    assert_ne!(a, b);
    assert_eq!(st.sessions.history(&a), Some(vec![]));
    let (status, _) = chat(&app, &a, "wadii").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(st.sessions.history(&a).unwrap().len(), 1);
}

#[tokio::test]
async fn greeting_turn_and_exit_terminate_the_session() {
    let app = app(state(Arc::new(AtomicClock::new(0))), LIMIT);
    let id = new_session(&app).await;
    let (status, body) = chat(&app, &id, "wadii").await;
    assert_eq!(status, StatusCode::OK);
    let resp: ChatResponse = serde_json::from_value(body.clone()).unwrap();
    assert_eq!(resp.reply, "Hesi shamwari! Uri sei hako?");
    assert_eq!(resp.route, Route::Rule);
    assert_eq!(resp.intent.as_ref().map(|i| i.as_str()), Some("greeting"));
    assert_eq!(body["route"], "RULE");

    let (_, body) = chat(&app, &id, "exit").await;
    assert_eq!(body["session_terminated"], true);
    assert_eq!(body["route"], "EXIT");
    assert!(body.get("intent").is_none() && body.get("confidence").is_none());
    let (status, body) = chat(&app, &id, "wadii").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(body["error"].is_string());
}

#[tokio::test]
async fn malformed_unknown_and_oversized_requests_are_rejected() {
    let app = app(state(Arc::new(AtomicClock::new(0))), LIMIT);
    let (status, body) = send(&app, "POST", "/chat", Body::from("{not json")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].is_string());
    let (status, _) = send(&app, "POST", "/chat", Body::from(r#"{"session_id":"x"}"#)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = chat(&app, "no-such-session", "wadii").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let id = new_session(&app).await;
    let (status, _) = chat(&app, &id, &"a".repeat(LIMIT * 2)).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
}

#[tokio::test]
async fn expired_session_is_not_found() {
    let clock = Arc::new(AtomicClock::new(0));
    let app = app(state(clock.clone()), LIMIT);
    let id = new_session(&app).await;
    clock.advance(1800 * 1000);
    let (status, _) = chat(&app, &id, "wadii").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn health_reports_loading_state_and_chunk_count() {
    let st = Arc::new(AppState::new(1800, Arc::new(AtomicClock::new(0))));
    let app = app(st.clone(), LIMIT);
    let (_, body) = send(&app, "GET", "/health", Body::empty()).await;
    let h: Health = serde_json::from_value(body).unwrap();
    assert_eq!((h.status.as_str(), h.model_loaded, h.kb_chunks), ("starting", false, 0));
    let id = new_session(&app).await;
    let (status, _) = chat(&app, &id, "wadii").await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);

    let engine = common::fixture_engine();
    let chunks = engine.kb.len();
    st.set_engine(engine);
    let (_, body) = send(&app, "GET", "/health", Body::empty()).await;
    let h: Health = serde_json::from_value(body).unwrap();
    assert_eq!((h.status.as_str(), h.model_loaded, h.kb_chunks), ("ok", true, chunks));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_keep_independent_histories() {
    let st = state(Arc::new(AtomicClock::new(0)));
    let app = app(st.clone(), LIMIT);
    let a = new_session(&app).await;
    let b = new_session(&app).await;
    static SCRIPT_A: [&str; 3] = ["wadii", "ndatenda shamwari", "mune mufundisi here"];
    static SCRIPT_B: [&str; 4] = ["ndinoda ku apply", "Rudo", "Diploma", "MBA"];
    let run = |id: String, lines: &'static [&'static str]| {
        let app = app.clone();
        tokio::spawn(async move {
            let mut routes = Vec::new();
            for line in lines {
                let (status, body) = chat(&app, &id, line).await;
                assert_eq!(status, StatusCode::OK);
                routes.push(body["route"].as_str().unwrap().to_string());
            }
            routes
        })
    };
    let (ra, rb) = tokio::join!(run(a.clone(), &SCRIPT_A), run(b.clone(), &SCRIPT_B));
    assert_eq!(ra.unwrap(), ["RULE", "RULE", "RULE"]);
    assert_eq!(rb.unwrap(), ["WORKFLOW"; 4]);
    let ha = st.sessions.history(&a).unwrap();
    let hb = st.sessions.history(&b).unwrap();
    assert_eq!(ha.iter().map(|t| t.user_text.as_str()).collect::<Vec<_>>(), SCRIPT_A);
    assert_eq!(hb.iter().map(|t| t.user_text.as_str()).collect::<Vec<_>>(), SCRIPT_B);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn turns_on_one_session_are_serialized() {
    let st = state(Arc::new(AtomicClock::new(0)));
    let app = app(st.clone(), LIMIT);
    let id = new_session(&app).await;
    let tasks: Vec<_> = (0..32)
        .map(|i| {
            let (app, id) = (app.clone(), id.clone());
            tokio::spawn(async move { chat(&app, &id, &format!("ndatenda {i}")).await.0 })
        })
        .collect();
    let mut accepted = 0;
    for t in tasks {
        if t.await.unwrap() == StatusCode::OK {
            accepted += 1;
        }
    }
    assert_eq!(accepted, 32);
    let history = st.sessions.history(&id).unwrap();
    assert_eq!(history.len(), accepted);
    let mut texts: Vec<_> = history.iter().map(|t| t.user_text.clone()).collect();
    texts.sort();
    texts.dedup();
    assert_eq!(texts.len(), 32);
}

#[tokio::test]
async fn turns_are_appended_to_the_log_file() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("turns.jsonl");
    let st = AppState::new(1800, Arc::new(AtomicClock::new(7))).with_engine(common::fixture_engine());
    let app = app(Arc::new(st.with_log(&log).unwrap()), LIMIT);
    let id = new_session(&app).await;
    chat(&app, &id, "wadii").await;
    chat(&app, &id, "exit").await;
    let text = std::fs::read_to_string(&log).unwrap();
    let records: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 2);
    assert!(records.iter().all(|r| r["session_id"] == id.as_str()));
    let turns = parse_log(&text).unwrap();
    assert_eq!(turns[0].route, Route::Rule);
    assert_eq!(turns[1].route, Route::Exit);
    assert_eq!(turns[1].timestamp, 7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expiry_matches_a_scan(ttl in 0u64..10, created in proptest::collection::vec(0u64..20_000, 0..30), now in 0u64..30_000) {
        let store = SessionStore::new(ttl);
        let mut idle: HashMap<String, u64> = HashMap::new();
        for &t in &created {
            idle.insert(store.create(t), t);
        }
        let expected = idle.values().filter(|&&t| now.saturating_sub(t) >= ttl * 1000).count();
        prop_assert_eq!(store.expire_sessions(now), expected);
        prop_assert_eq!(store.len(), created.len() - expected);
        for (id, &t) in &idle {
            let survives = now.saturating_sub(t) < ttl * 1000;
            prop_assert_eq!(store.history(id).is_some(), survives);
        }
    }
}
