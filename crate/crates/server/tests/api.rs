use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use metaroute::agent::{DecisionProvider, ProviderError, ProviderRequest, ProviderSpec, ScriptedProvider};
use metaroute::pipeline::{Session, Stage};
use metaroute_server::{environment_with, router, AppState, ServerConfig};

const LIVESTOCK: &str = "I am transporting livestock with a truck from Toronto to Ottawa. \
What do I have to check. I also want to avoid ice on the roads";
const INCIDENTS: &str = "Which severe incidents are there?";

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn config() -> ServerConfig {
    let root = fixtures();
    ServerConfig {
        bind: "127.0.0.1:0".parse().unwrap(),
        catalog: root.join("catalog.json"),
        gazetteer: root.join("gazetteer.json"),
        data_root: root.join("data"),
        vqa: Some(root.join("vqa.json")),
        provider: ProviderSpec::Scripted(root.join("scripted/livestock.json")),
        max_sessions: 8,
        snapshot: None,
    }
}

fn incidents_script() -> ScriptedProvider {
    let responses = [
        json!({"task_types": ["task.information_retrieval"]}),
        json!({"objectives": ["objective.safety"]}),
        json!({"sources": ["on511"]}),
        json!({"resources": ["on511.events"]}),
        json!({"attributes": ["on511.events.type", "on511.events.severity"]}),
        json!({"interfaces": ["interface.information_retrieval"]}),
        json!({"spatial": "no", "location": "toronto", "radius_km": 10}),
        json!({"table": "events", "filters": [{"column": "severity", "op": "=", "value": "high"}],
               "project": ["type"], "aggregate": "none"}),
    ];
    ScriptedProvider::new(responses.iter().map(Value::to_string))
}

/// Routes each call to the script of the query its prompt mentions, so
/// sessions can interleave.
struct ByQuery(BTreeMap<&'static str, ScriptedProvider>);

impl ByQuery {
    fn new() -> Self {
        let livestock = ScriptedProvider::from_file(fixtures().join("scripted/livestock.json")).unwrap();
        ByQuery(BTreeMap::from([(LIVESTOCK, livestock), (INCIDENTS, incidents_script())]))
    }
}

impl DecisionProvider for ByQuery {
    fn complete(&self, request: &ProviderRequest) -> Result<String, ProviderError> {
        self.0
            .iter()
            .find(|(q, _)| request.prompt.contains(*q))
            .map(|(_, p)| p.complete(request))
            .unwrap_or_else(|| Err(ProviderError::BadResponse("unknown query".into())))
    }
}

fn app_with(provider: Arc<dyn DecisionProvider>, max_sessions: usize) -> axum::Router {
    let env = environment_with(&config(), provider).unwrap();
    router(AppState::new(env, max_sessions))
}

fn app() -> axum::Router {
    app_with(Arc::new(ByQuery::new()), 8)
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or(Body::empty(), |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let v = if bytes.is_empty() { Value::Null } else { serde_json::from_slice(&bytes).unwrap() };
    (status, v)
}

async fn create(app: &axum::Router, query: &str, mode: &str) -> Session {
    let (status, v) = call(app, "POST", "/sessions", Some(json!({"query": query, "mode": mode}))).await;
    assert_eq!(status, StatusCode::CREATED, "{v}");
    serde_json::from_value(v).unwrap()
}

async fn advance(app: &axum::Router, id: &str, body: Value) -> (StatusCode, Value) {
    call(app, "POST", &format!("/sessions/{id}/advance"), Some(body)).await
}

async fn run_to_end(app: &axum::Router, id: &str) -> Session {
    let mut n = 0;
    loop {
        n += 1;
        let (status, v) = advance(app, id, json!({"request_id": format!("{id}-{n}")})).await;
        assert_eq!(status, StatusCode::OK, "{v}");
        let s: Session = serde_json::from_value(v).unwrap();
        if s.stage.is_terminal() {
            return s;
        }
    }
}

#[tokio::test]
async fn health_is_ok() {
    let (status, v) = call(&app(), "GET", "/health", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v, json!({"status": "ok"}));
}

#[tokio::test]
async fn catalog_lists_nodes_and_edges() {
    let (status, v) = call(&app(), "GET", "/catalog", None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["nodes"].as_array().unwrap().len(), 54);
    assert_eq!(v["edges"].as_array().unwrap().len(), 54);
}

#[tokio::test]
async fn unknown_session_is_404() {
    let (status, v) = call(&app(), "GET", "/sessions/s999999", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "not_found");
}

#[tokio::test]
async fn empty_query_is_400() {
    let (status, v) = call(&app(), "POST", "/sessions", Some(json!({"query": " "}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["code"], "empty_query");
}

#[tokio::test]
async fn get_renders_the_pipeline_state() {
    let app = app();
    let created = create(&app, LIVESTOCK, "control").await;
    let (_, v) = advance(&app, &created.id, json!({"request_id": "a"})).await;
    let advanced: Session = serde_json::from_value(v).unwrap();
    let (status, v) = call(&app, "GET", &format!("/sessions/{}", created.id), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(serde_json::from_value::<Session>(v.clone()).unwrap(), advanced);
    assert_eq!(v, serde_json::to_value(&advanced).unwrap());
    assert!(advanced.pending.is_some());
}

#[tokio::test]
async fn automatic_run_yields_a_route_collection() {
    let app = app();
    let s = create(&app, LIVESTOCK, "automatic").await;
    let (status, v) = call(&app, "GET", &format!("/sessions/{}/result", s.id), None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(v["code"], "not_found");
    let done = run_to_end(&app, &s.id).await;
    assert_eq!(done.stage, Stage::Done);
    let (status, v) = call(&app, "GET", &format!("/sessions/{}/result", s.id), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["kind"], "route");
    assert_eq!(v["payload"]["type"], "FeatureCollection");
    assert_eq!(v["payload"]["features"][0]["geometry"]["type"], "LineString");
}

#[tokio::test]
async fn invalid_override_is_422_and_keeps_the_proposal() {
    let app = app();
    let s = create(&app, LIVESTOCK, "control").await;
    let (_, v) = advance(&app, &s.id, json!({"request_id": "1"})).await;
    let proposed: Session = serde_json::from_value(v).unwrap();
    let (status, v) = advance(&app, &s.id, json!({"request_id": "2", "override": ["nrn"]})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(v["code"], "invalid_override");
    let (_, v) = call(&app, "GET", &format!("/sessions/{}", s.id), None).await;
    assert_eq!(serde_json::from_value::<Session>(v).unwrap(), proposed);
    // the same request id may be retried with a valid override
    let (status, v) = advance(&app, &s.id, json!({"request_id": "2", "override": ["task.route_planning"]})).await;
    assert_eq!(status, StatusCode::OK, "{v}");
    assert_eq!(v["stage"], "select_sources");
    assert_eq!(v["selections"]["classify"], json!(["task.route_planning"]));
}

#[tokio::test]
async fn replayed_request_does_not_double_advance() {
    let app = app();
    let s = create(&app, LIVESTOCK, "automatic").await;
    let (_, first) = advance(&app, &s.id, json!({"request_id": "r1"})).await;
    let (status, second) = advance(&app, &s.id, json!({"request_id": "r1"})).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(first, second);
    assert_eq!(second["stage"], "select_sources");
}

#[tokio::test]
async fn request_id_header_is_honoured() {
    let app = app();
    let s = create(&app, LIVESTOCK, "automatic").await;
    for _ in 0..2 {
        let req = Request::builder()
            .method("POST")
            .uri(format!("/sessions/{}/advance", s.id))
            .header("content-type", "application/json")
            .header("request-id", "h1")
            .body(Body::from("{}"))
            .unwrap();
        assert_eq!(app.clone().oneshot(req).await.unwrap().status(), StatusCode::OK);
    }
    let (_, v) = call(&app, "GET", &format!("/sessions/{}", s.id), None).await;
    assert_eq!(v["stage"], "select_sources");
}

#[tokio::test]
async fn stale_stage_is_409() {
    let app = app();
    let s = create(&app, LIVESTOCK, "automatic").await;
    advance(&app, &s.id, json!({"request_id": "1", "stage": "classify"})).await;
    let (status, v) = advance(&app, &s.id, json!({"request_id": "2", "stage": "classify"})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "stage_order_violation");
}

#[tokio::test]
async fn advancing_a_done_session_is_409() {
    let app = app();
    let s = create(&app, INCIDENTS, "automatic").await;
    run_to_end(&app, &s.id).await;
    let (status, v) = advance(&app, &s.id, json!({"request_id": "late"})).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["code"], "stage_order_violation");
}

#[tokio::test]
async fn agent_failure_fails_the_session() {
    let app = app_with(Arc::new(ScriptedProvider::new(["not json"; 5])), 8);
    let s = create(&app, "anything", "automatic").await;
    let (status, v) = advance(&app, &s.id, json!({})).await;
    assert_eq!(status, StatusCode::BAD_GATEWAY);
    assert_eq!(v["code"], "agent_failure");
    let (_, v) = call(&app, "GET", &format!("/sessions/{}", s.id), None).await;
    assert_eq!(v["stage"], "failed");
}

#[tokio::test]
async fn session_limit_is_enforced() {
    let app = app_with(Arc::new(ByQuery::new()), 2);
    create(&app, "a", "automatic").await;
    create(&app, "b", "automatic").await;
    let (status, v) = call(&app, "POST", "/sessions", Some(json!({"query": "c"}))).await;
    assert_eq!(status, StatusCode::TOO_MANY_REQUESTS);
    assert_eq!(v["code"], "session_limit");
}

async fn accept_all(app: &axum::Router, query: &str) -> Session {
    let s = create(app, query, "control").await;
    run_to_end(app, &s.id).await
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn interleaved_sessions_stay_independent() {
    let solo_livestock = accept_all(&app(), LIVESTOCK).await;
    let solo_incidents = accept_all(&app(), INCIDENTS).await;

    let app = app();
    let a = create(&app, LIVESTOCK, "control").await;
    let b = create(&app, INCIDENTS, "control").await;
    let (a, b) = tokio::join!(run_to_end(&app, &a.id), run_to_end(&app, &b.id));
    assert_eq!(a.log_lines(), solo_livestock.log_lines());
    assert_eq!(b.log_lines(), solo_incidents.log_lines());
    assert_eq!(a.result, solo_livestock.result);
    assert_eq!(b.result, solo_incidents.result);

    // strictly alternating as well
    let app = self::app();
    let a = create(&app, LIVESTOCK, "control").await;
    let b = create(&app, INCIDENTS, "control").await;
    let mut stages = [Stage::Classify, Stage::Classify];
    let mut n = 0;
    while !stages.iter().all(|s| s.is_terminal()) {
        n += 1;
        for (i, id) in [&a.id, &b.id].into_iter().enumerate() {
            if !stages[i].is_terminal() {
                let (status, v) = advance(&app, id, json!({"request_id": format!("alt-{n}")})).await;
                assert_eq!(status, StatusCode::OK, "{v}");
                stages[i] = serde_json::from_value(v["stage"].clone()).unwrap();
            }
        }
    }
    for (id, solo) in [(&a.id, &solo_livestock), (&b.id, &solo_incidents)] {
        let (_, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
        let s: Session = serde_json::from_value(v).unwrap();
        assert_eq!(s.log_lines(), solo.log_lines());
        assert_eq!(s.selections, solo.selections);
    }
}

#[tokio::test]
async fn snapshot_restores_sessions() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("sessions.json");
    let state = || {
        let env = environment_with(&config(), Arc::new(ByQuery::new())).unwrap();
        AppState::new(env, 8).with_snapshot(&snap).unwrap()
    };
    let app = router(state());
    let s = create(&app, INCIDENTS, "control").await;
    let (_, v) = advance(&app, &s.id, json!({"request_id": "x"})).await;
    drop(app);

    let app = router(state());
    let (status, restored) = call(&app, "GET", &format!("/sessions/{}", s.id), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(restored, v);
    let next = create(&app, INCIDENTS, "control").await;
    assert_ne!(next.id, s.id);
    // the recorded request id survives the restart
    let (_, again) = advance(&app, &s.id, json!({"request_id": "x"})).await;
    assert_eq!(again, v);
}
