use std::path::PathBuf;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use ergoaog::scenario::corner_joint;
use ergoaog_service::{
    router, AppState, CompletionRequest, CreateSession, ErrorResponse, OverrideRequest,
    OverrideResponse, SessionList, StateResponse, PROTOCOL_VERSION,
};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

/// Compares `actual` with a stored fixture. `BLESS=1` rewrites the fixture.
fn check_fixture(name: &str, actual: &Value) {
    let path = fixture_path(name);
    let pretty = serde_json::to_string_pretty(actual).unwrap() + "\n";
    if std::env::var_os("BLESS").is_some() {
        std::fs::write(&path, pretty).unwrap();
        return;
    }
    let stored: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(
        &stored, actual,
        "{name} differs; rerun with BLESS=1 after an intended change"
    );
}

fn load_fixture(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(fixture_path(name)).unwrap()).unwrap()
}

fn create_body() -> Value {
    let s = corner_joint();
    serde_json::to_value(CreateSession {
        v: PROTOCOL_VERSION,
        graph: s.graph,
        calibration: s.calibration,
        config: s.config,
        initial_wear: s.initial_wear,
    })
    .unwrap()
}

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json");
    let request = match body {
        Some(b) => request
            .body(Body::from(serde_json::to_vec(&b).unwrap()))
            .unwrap(),
        None => request.body(Body::empty()).unwrap(),
    };
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, value)
}

async fn created(app: &Router) -> String {
    let (status, body) = send(app, "POST", "/v1/sessions", Some(create_body())).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["id"].as_str().unwrap().to_string()
}

fn letter(worker: &str) -> &'static str {
    if worker == "human" {
        "H"
    } else {
        "R"
    }
}

#[test]
fn request_fixtures_parse() {
    let create: CreateSession =
        serde_json::from_value(load_fixture("create_session.request.json")).unwrap();
    assert_eq!(create.v, PROTOCOL_VERSION);
    let _: CompletionRequest =
        serde_json::from_value(load_fixture("completion.request.json")).unwrap();
    let with_trace: CompletionRequest =
        serde_json::from_value(load_fixture("completion_trace.request.json")).unwrap();
    assert!(with_trace.completion.scores.is_some());
    let _: OverrideRequest = serde_json::from_value(load_fixture("override.request.json")).unwrap();
    let _: ErrorResponse = serde_json::from_value(load_fixture("error.response.json")).unwrap();
    let _: StateResponse = serde_json::from_value(load_fixture("state.response.json")).unwrap();
    let _: OverrideResponse =
        serde_json::from_value(load_fixture("override.response.json")).unwrap();
    let _: SessionList = serde_json::from_value(load_fixture("list.response.json")).unwrap();
}

#[tokio::test]
async fn create_echoes_initial_wear_and_matches_fixtures() {
    check_fixture("create_session.request.json", &create_body());
    let app = router(AppState::new());
    let (status, body) = send(
        &app,
        "POST",
        "/v1/sessions",
        Some(load_fixture("create_session.request.json")),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let wear = &body["state"]["wear"];
    assert_eq!(
        [
            &wear["shoulder"],
            &wear["elbow"],
            &wear["wrist"],
            &wear["trunk"],
            &wear["neck"]
        ],
        [
            &json!(0.3),
            &json!(0.1),
            &json!(0.1),
            &json!(0.45),
            &json!(0.5)
        ]
    );
    check_fixture("state.response.json", &body);
    let (_, listed) = send(&app, "GET", "/v1/sessions", None).await;
    check_fixture("list.response.json", &listed);
}

#[tokio::test]
async fn get_state_is_side_effect_free() {
    let app = router(AppState::new());
    let id = created(&app).await;
    let (_, a) = send(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    let (_, b) = send(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(a, b);
    let (_, log) = send_text(&app, &format!("/v1/sessions/{id}/log")).await;
    assert_eq!(log.lines().count(), 2);
}

async fn send_text(app: &Router, uri: &str) -> (StatusCode, String) {
    let response = app
        .clone()
        .oneshot(Request::get(uri).body(Body::empty()).unwrap())
        .await
        .unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

#[tokio::test]
async fn online_loop_over_the_protocol() {
    let app = router(AppState::new());
    let id = created(&app).await;
    let mut letters = Vec::new();
    let (_, mut state) = send(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    while state["state"]["complete"] == json!(false) {
        let suggestion = state["state"]["suggestion"].clone();
        let worker = suggestion["worker"].as_str().unwrap().to_string();
        letters.push(letter(&worker));
        let body = json!({"v": 1, "action": suggestion["action"], "worker": worker});
        let (status, next) = send(
            &app,
            "POST",
            &format!("/v1/sessions/{id}/completions"),
            Some(body),
        )
        .await;
        assert_eq!(status, StatusCode::OK, "{next}");
        state = next;
    }
    assert_eq!(letters.join(","), "H,R,H,H,R");
    assert_eq!(state["state"]["suggestion"], Value::Null);
    assert_eq!(state["state"]["history"].as_array().unwrap().len(), 5);
}

#[tokio::test]
async fn completion_conflicts_and_errors() {
    let app = router(AppState::new());
    let id = created(&app).await;
    let uri = format!("/v1/sessions/{id}/completions");
    let body = load_fixture("completion.request.json");
    let (first, _) = send(&app, "POST", &uri, Some(body.clone())).await;
    assert_eq!(first, StatusCode::OK);
    let (second, error) = send(&app, "POST", &uri, Some(body)).await;
    assert_eq!(second, StatusCode::CONFLICT);
    assert_eq!(error["error"]["code"], "conflict");

    let (status, error) = send(
        &app,
        "POST",
        "/v1/sessions/nope/completions",
        Some(json!({"v": 1})),
    )
    .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    check_fixture("error.response.json", &error);

    let (status, error) = send(
        &app,
        "POST",
        &uri,
        Some(json!({"v": 2, "action": "a2", "worker": "robot"})),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error["error"]["code"], "version_mismatch");

    let bad_trace =
        json!({"v": 1, "action": "a2", "worker": "human", "scores": [{"t": 0, "shoulder": 9}]});
    let (status, error) = send(&app, "POST", &uri, Some(bad_trace)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error["error"]["code"], "malformed_body");

    let (status, _) = send(
        &app,
        "POST",
        &uri,
        Some(load_fixture("completion_trace.request.json")),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
}

#[tokio::test]
async fn invalid_graph_reports_details() {
    let app = router(AppState::new());
    let mut body = create_body();
    // Drop every robot arc of a1 and all of a5: the root becomes unreachable.
    let arcs = body["graph"]["arcs"].as_array().unwrap().clone();
    let kept: Vec<Value> = arcs.into_iter().filter(|a| a["action"] != "a5").collect();
    let kept: Vec<Value> = kept
        .into_iter()
        .enumerate()
        .map(|(i, mut a)| {
            a["id"] = json!(i);
            a
        })
        .collect();
    body["graph"]["arcs"] = Value::Array(kept);
    let (status, error) = send(&app, "POST", "/v1/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error["error"]["code"], "invalid_graph");
    assert!(!error["error"]["details"].as_array().unwrap().is_empty());

    let mut body = create_body();
    body["initial_wear"]["neck"] = json!(1.0);
    let (status, error) = send(&app, "POST", "/v1/sessions", Some(body)).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error["error"]["code"], "invalid_input");
}

#[tokio::test]
async fn overrides() {
    let app = router(AppState::new());
    let id = created(&app).await;
    let uri = format!("/v1/sessions/{id}/overrides");
    let (status, body) = send(
        &app,
        "POST",
        &uri,
        Some(load_fixture("override.request.json")),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    check_fixture("override.response.json", &body);
    let (status, _) = send(
        &app,
        "POST",
        &uri,
        Some(json!({"v": 1, "action": "a5", "worker": "robot"})),
    )
    .await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (_, state) = send(&app, "GET", &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(state["state"]["suggestion"]["worker"], "robot");
    assert_eq!(state["state"]["suggestion"]["overridden"], true);
}

#[tokio::test]
async fn list_and_delete() {
    let app = router(AppState::new());
    let a = created(&app).await;
    let b = created(&app).await;
    assert_ne!(a, b);
    let (_, list) = send(&app, "GET", "/v1/sessions", None).await;
    assert_eq!(list["sessions"].as_array().unwrap().len(), 2);
    let (status, _) = send(&app, "DELETE", &format!("/v1/sessions/{a}"), None).await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    let (status, _) = send(&app, "DELETE", &format!("/v1/sessions/{a}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _) = send(&app, "GET", &format!("/v1/sessions/{a}"), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (_, list) = send(&app, "GET", "/v1/sessions", None).await;
    assert_eq!(list["sessions"][0]["id"], json!(b));
}

/// Reads `n` server-sent events from a streaming body.
async fn read_events(body: Body, n: usize) -> Vec<(String, Value)> {
    let mut body = body;
    let mut buffer = String::new();
    let mut events = Vec::new();
    while events.len() < n {
        let frame = tokio::time::timeout(Duration::from_secs(5), body.frame())
            .await
            .expect("stream stalled");
        let frame = frame.expect("stream ended").unwrap();
        if let Ok(data) = frame.into_data() {
            buffer.push_str(std::str::from_utf8(&data).unwrap());
        }
        while let Some(end) = buffer.find("\n\n") {
            let block: String = buffer.drain(..end + 2).collect();
            let mut kind = String::new();
            let mut data = String::new();
            for line in block.lines() {
                if let Some(k) = line.strip_prefix("event: ") {
                    kind = k.to_string();
                } else if let Some(d) = line.strip_prefix("data: ") {
                    data.push_str(d);
                }
            }
            if !data.is_empty() {
                events.push((kind, serde_json::from_str(&data).unwrap()));
            }
        }
    }
    events
}

#[tokio::test]
async fn event_stream_follows_the_log() {
    let app = router(AppState::new());
    let id = created(&app).await;
    let response = app
        .clone()
        .oneshot(
            Request::get(format!("/v1/sessions/{id}/events"))
                .body(Body::empty())
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(response.status(), StatusCode::OK);
    let body = response.into_body();
    let (status, _) = send(
        &app,
        "POST",
        &format!("/v1/sessions/{id}/completions"),
        Some(load_fixture("completion.request.json")),
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    // start, suggestion, then completion, wear, suggestion.
    let events = read_events(body, 5).await;
    let kinds: Vec<&str> = events.iter().map(|(k, _)| k.as_str()).collect();
    assert_eq!(
        kinds,
        ["start", "suggestion", "completion", "wear", "suggestion"]
    );
    let (_, log) = send_text(&app, &format!("/v1/sessions/{id}/log")).await;
    let logged: Vec<Value> = log
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let streamed: Vec<Value> = events.into_iter().map(|(_, v)| v).collect();
    assert_eq!(streamed, logged);
    check_fixture("event.completion.json", &streamed[2]);

    let (status, _) = send_text(&app, "/v1/sessions/missing/events").await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}
