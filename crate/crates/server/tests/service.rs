use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use warden_core::api::GuardBody;
use warden_core::bench::smoke_cases;
use warden_core::bridge::{CanonicalSynthesizer, HttpChatBackend, HttpConfig, LlmBackend, ScriptedBackend};
use warden_core::toolbox::Policies;
use warden_core::{seeded_memory, EngineConfig, GuardEngine};
use warden_server::{router, MAX_BODY_BYTES};

const PLAN: &str = include_str!("../../core/tests/fixtures/typo/plan.txt");
const TYPO: &str = include_str!("../../core/tests/fixtures/typo/program.gdsl");

fn app_with(backend: Arc<dyn LlmBackend>) -> Router {
    let policies = Policies::default();
    let engine = GuardEngine::new(EngineConfig::default(), policies.clone(), seeded_memory(&policies), backend).unwrap();
    router(Arc::new(engine))
}

fn app() -> Router {
    app_with(Arc::new(CanonicalSynthesizer::new(Policies::default())))
}

async fn send(app: Router, method: &str, uri: &str, body: Option<String>) -> (StatusCode, Value) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header("content-type", "application/json");
    }
    let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
    let resp = app.oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn post(app: Router, uri: &str, body: &impl serde::Serialize) -> (StatusCode, Value) {
    send(app, "POST", uri, Some(serde_json::to_string(body).unwrap())).await
}

#[tokio::test]
async fn health_check() {
    let (status, body) = send(app(), "GET", "/healthz", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, json!({"status": "ok", "backend": "canonical"}));
}

#[tokio::test]
async fn denied_case_returns_label_one() {
    let case = &smoke_cases()[0];
    let (status, body) = post(app(), "/v1/guard", case).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["label"], 1);
    assert!(body["rendered"].as_str().unwrap().starts_with("access denied"));
    assert_eq!(body["details"]["inaccessible"], json!({"lab": ["labname", "labresulttime"]}));
}

#[tokio::test]
async fn every_smoke_case_matches_its_label() {
    for case in smoke_cases() {
        let (status, body) = post(app(), "/v1/guard", &GuardBody::from(&case)).await;
        assert_eq!(status, StatusCode::OK, "{}: {body}", case.id);
        assert_eq!(body["label"], u8::from(case.label), "{}", case.id);
    }
}

#[tokio::test]
async fn oversized_body_is_rejected() {
    let big = "x".repeat(2 * MAX_BODY_BYTES);
    let (status, body) = send(app(), "POST", "/v1/guard", Some(big)).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);
    assert_eq!(body["code"], "body_too_large");
}

#[tokio::test]
async fn malformed_bodies_are_bad_requests() {
    for text in ["{not json", r#"{"kind": "access_control"}"#, r#"{"kind": "nope", "agent_io": {}}"#] {
        let (status, body) = send(app(), "POST", "/v1/guard", Some(text.into())).await;
        assert_eq!(status, StatusCode::BAD_REQUEST, "{text}");
        assert_eq!(body["code"], "malformed_body");
    }
    let empty = GuardBody::new(warden_core::RequestKind::SafetyRules, warden_core::AgentIo::new(" ", ""));
    assert_eq!(post(app(), "/v1/guard", &empty).await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn unknown_role_and_policy_are_unprocessable() {
    let mut case = smoke_cases().remove(0);
    case.agent_io.structured.as_mut().unwrap().identity = Some("janitor".into());
    let (status, body) = post(app(), "/v1/guard", &case).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert!(body["message"].as_str().unwrap().contains("janitor"));

    let mut guard = GuardBody::from(&smoke_cases()[1]);
    guard.policy_ref = Some("hr_policy".into());
    assert_eq!(post(app(), "/v1/guard", &guard).await.0, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn unreachable_backend_is_unavailable() {
    let backend = HttpChatBackend::with_api_key(HttpConfig::new("http://127.0.0.1:9", "m"), None).unwrap();
    let (status, body) = post(app_with(Arc::new(backend)), "/v1/guard", &smoke_cases()[0]).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["code"], "backend_unavailable");
}

#[tokio::test]
async fn exhausted_debug_loop_is_a_guard_failure() {
    let backend = ScriptedBackend::sequence([PLAN, TYPO, TYPO, TYPO, TYPO]);
    let (status, body) = post(app_with(Arc::new(backend)), "/v1/guard", &smoke_cases()[0]).await;
    assert_eq!(status, StatusCode::INTERNAL_SERVER_ERROR);
    assert_eq!(body["code"], "guard_failure");
    assert_eq!(body["exec_stats"]["debug_iterations_used"], 3);
}

#[tokio::test]
async fn eval_and_score() {
    let (status, body) = post(app(), "/v1/eval", &json!({"cases": smoke_cases()})).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["records"].as_array().unwrap().len(), 6);
    for m in ["lpa", "lpp", "lpr", "ea", "fra"] {
        assert_eq!(body["report"]["metrics"][m], 100.0, "{m}");
    }
    let (status, scored) = post(app(), "/v1/score", &json!({"records": body["records"]})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(scored, body["report"]);

    let (status, _) = post(app(), "/v1/eval", &json!({"cases": []})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn memory_list_and_insert() {
    let app = app();
    let (_, listed) = send(app.clone(), "GET", "/v1/memory", None).await;
    let before = listed["entries"].as_array().unwrap().len();
    assert!(before > 0);
    let entry = json!({
        "agent_input": "Identity: nursing\nQuestion: list allergies",
        "agent_output": "LoadDB('allergy') -> allergyname",
        "plan": listed["entries"][0]["plan"],
        "program_source": "verdict grant",
        "benchmark_tag": "access_control",
    });
    let (status, inserted) = post(app.clone(), "/v1/memory", &entry).await;
    assert_eq!(status, StatusCode::OK, "{inserted}");
    let (_, listed) = send(app.clone(), "GET", "/v1/memory", None).await;
    assert_eq!(listed["entries"].as_array().unwrap().len(), before + 1);
    assert_eq!(listed["entries"][before]["id"], inserted["id"]);

    let mut bad = entry.clone();
    bad["benchmark_tag"] = json!("finance");
    assert_eq!(post(app, "/v1/memory", &bad).await.0, StatusCode::UNPROCESSABLE_ENTITY);
}

#[tokio::test]
async fn concurrent_requests_are_isolated() {
    let app = app();
    let cases = smoke_cases();
    let handles: Vec<_> = cases
        .iter()
        .cycle()
        .take(24)
        .map(|case| {
            let app = app.clone();
            let case = case.clone();
            tokio::spawn(async move { (case.label, post(app, "/v1/guard", &case).await) })
        })
        .collect();
    for h in handles {
        let (label, (status, body)) = h.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        assert_eq!(body["label"], u8::from(label));
    }
}
