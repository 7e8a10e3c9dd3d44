use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use riskcal_core::catalog::{harvest_all, FixtureSource};
use riskcal_core::curation::{read_label_file, CollectionManifest, DEFAULT_MIN_QI};
use riskcal_core::workflow::{replay_history, CollectionRef, Redaction, Workbench};
use riskcal_core::QuasiIdentifierDictionary;
use riskcal_server::{router, AppState, ACKNOWLEDGMENT};
use serde_json::{json, Value};
use tower::ServiceExt;

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn collection(dir: &Path) -> CollectionRef {
    let dict = QuasiIdentifierDictionary::builtin();
    let all = harvest_all(&FixtureSource::new(&fixtures()), &dict).unwrap();
    let labels = read_label_file(&fixtures().join("labels.json")).unwrap();
    let manifest = CollectionManifest::from_harvest(&all, &dict, DEFAULT_MIN_QI)
        .unwrap()
        .apply_labels(&labels)
        .unwrap();
    let path = dir.join("collection.jsonl");
    manifest.save(&path).unwrap();
    CollectionRef {
        manifest: path.display().to_string(),
        source: fixtures().display().to_string(),
    }
}

struct Api {
    app: Router,
    history: PathBuf,
    _dir: tempfile::TempDir,
}

fn api() -> Api {
    let dir = tempfile::tempdir().unwrap();
    let reference = collection(dir.path());
    let wb = Arc::new(Workbench::open(reference, QuasiIdentifierDictionary::builtin()).unwrap());
    let history = dir.path().join("sessions");
    std::fs::create_dir_all(&history).unwrap();
    let state = Arc::new(AppState::new(wb, Some(history.clone())));
    Api {
        app: router(state),
        history,
        _dir: dir,
    }
}

impl Api {
    async fn call(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, String) {
        let body = body.map_or(Body::empty(), |b| Body::from(b.to_string()));
        let req = Request::builder()
            .method(method)
            .uri(uri)
            .header("content-type", "application/json")
            .body(body)
            .unwrap();
        let resp = self.app.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        (status, String::from_utf8(bytes.to_vec()).unwrap())
    }

    async fn json(&self, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
        let (status, text) = self.call(method, uri, body).await;
        (status, serde_json::from_str(&text).unwrap_or(Value::Null))
    }

    async fn session(&self) -> String {
        let (status, body) = self.json(Method::POST, "/v1/sessions", None).await;
        assert_eq!(status, StatusCode::CREATED);
        body["session_id"].as_str().unwrap().to_string()
    }
}

fn code(body: &Value) -> &str {
    body["error"]["code"].as_str().unwrap_or("")
}

async fn run_workflow(api: &Api, id: &str) {
    let (s, _) = api
        .json(Method::POST, &format!("/v1/sessions/{id}/qis"), Some(json!({"profile": "police"})))
        .await;
    assert_eq!(s, StatusCode::OK);
    let steps = [
        ("cluster", json!({})),
        ("pairs", json!({})),
        ("join", json!({"left": "nola.example:epr-2015", "right": "nola.example:epr-2016"})),
        ("suggest", json!({})),
        ("parallel-sets", json!({"axes": ["victim race", "offender gender", "disposition"]})),
        ("disclosures", json!({})),
    ];
    for (step, params) in steps {
        let (s, body) = api
            .json(Method::POST, &format!("/v1/sessions/{id}/steps/{step}"), Some(params))
            .await;
        assert_eq!(s, StatusCode::OK, "{step}: {body}");
        assert_eq!(body["step"], step);
    }
}

#[tokio::test]
async fn sessions_are_created_with_distinct_ids() {
    let api = api();
    let a = api.session().await;
    let b = api.session().await;
    assert_ne!(a, b);
    let (s, view) = api.json(Method::GET, &format!("/v1/sessions/{a}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(view["history"].as_array().unwrap().len(), 1);
    assert_eq!(view["history"][0]["step"], "created");

    let (s, body) = api.json(Method::GET, "/v1/sessions/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(code(&body), "UnknownSession");

    let missing = json!({"collection": {"manifest": "/no/such/manifest.jsonl", "source": "/no"}});
    let (s, body) = api.json(Method::POST, "/v1/sessions", Some(missing)).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(code(&body), "UnknownCollection");
}

#[tokio::test]
async fn error_codes_in_bodies() {
    let api = api();
    let id = api.session().await;
    let (s, body) = api
        .json(Method::POST, &format!("/v1/sessions/{id}/steps/join"), Some(json!({})))
        .await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(code(&body), "StepOutOfOrder");

    let (s, body) = api
        .json(Method::POST, &format!("/v1/sessions/{id}/steps/teleport"), None)
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(code(&body), "InvalidParameter");

    let (_, body) = api
        .json(Method::POST, &format!("/v1/sessions/{id}/qis"), Some(json!({"qis": []})))
        .await;
    assert_eq!(code(&body), "EmptySelection");
    let (s, body) = api
        .json(Method::POST, &format!("/v1/sessions/{id}/qis"), Some(json!({"profile": "zoo"})))
        .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(code(&body), "UnknownProfile");

    let (s, body) = api.json(Method::GET, &format!("/v1/sessions/{id}/report"), None).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(code(&body), "NothingToReport");
}

#[tokio::test]
async fn workflow_over_http() {
    let api = api();
    let id = api.session().await;
    api.json(Method::POST, &format!("/v1/sessions/{id}/qis"), Some(json!({"profile": "police"})))
        .await;
    let (_, clusters) = api
        .json(Method::POST, &format!("/v1/sessions/{id}/steps/cluster"), None)
        .await;
    assert_eq!(clusters["output"]["clusters"][0]["members"].as_array().unwrap().len(), 8);
    let (_, pairs) = api
        .json(Method::POST, &format!("/v1/sessions/{id}/steps/pairs"), Some(json!({})))
        .await;
    assert_eq!(pairs["output"]["pair_count"], 28);
    let (s, join) = api
        .json(
            Method::POST,
            &format!("/v1/sessions/{id}/steps/join"),
            Some(json!({"left": "nola.example:epr-2015", "right": "nola.example:epr-2016"})),
        )
        .await;
    assert_eq!(s, StatusCode::OK);
    let joined = join["output"]["total_joined"].as_u64().unwrap();
    let (_, model) = api
        .json(
            Method::POST,
            &format!("/v1/sessions/{id}/steps/parallel_sets"),
            Some(json!({"axes": ["victim race", "offender gender", "disposition"]})),
        )
        .await;
    let model = &model["output"];
    assert_eq!(model["total"].as_u64().unwrap(), joined);
    for axis in model["axes"].as_array().unwrap() {
        let sum: u64 = axis["categories"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c["count"].as_u64().unwrap())
            .sum();
        assert_eq!(sum, joined);
    }
    let (_, view) = api.json(Method::GET, &format!("/v1/sessions/{id}"), None).await;
    assert_eq!(view["completed"], json!(["cluster", "pairs", "join", "parallel-sets"]));
}

#[tokio::test]
async fn report_redaction_gate() {
    let api = api();
    let id = api.session().await;
    run_workflow(&api, &id).await;

    let (s, masked) = api.call(Method::GET, &format!("/v1/sessions/{id}/report"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(!masked.contains("Dinkins"));
    let (_, explicit) = api
        .call(Method::GET, &format!("/v1/sessions/{id}/report?redact=true"), None)
        .await;
    assert_eq!(explicit, masked);

    let (s, body) = api
        .json(Method::GET, &format!("/v1/sessions/{id}/report?redact=false"), None)
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(code(&body), "InvalidParameter");

    let uri = format!("/v1/sessions/{id}/report?redact=false&acknowledge={ACKNOWLEDGMENT}");
    let (s, raw) = api.call(Method::GET, &uri, None).await;
    assert_eq!(s, StatusCode::OK);
    assert!(raw.contains("85XX Dinkins St"));
    let raw: Value = serde_json::from_str(&raw).unwrap();
    let masked: Value = serde_json::from_str(&masked).unwrap();
    assert_eq!(raw["candidate_counts"], masked["candidate_counts"]);
}

#[tokio::test]
async fn http_report_matches_replayed_history() {
    let api = api();
    let id = api.session().await;
    run_workflow(&api, &id).await;
    let (_, http_report) = api.call(Method::GET, &format!("/v1/sessions/{id}/report"), None).await;

    let log = api.history.join(format!("{id}.jsonl"));
    let replayed = replay_history(&log, QuasiIdentifierDictionary::builtin()).unwrap();
    let replay_report = replayed.session.export_report(Redaction::Masked).unwrap().to_json();
    assert_eq!(http_report, replay_report);
}

#[tokio::test]
async fn cancel_is_accepted_and_next_step_runs() {
    let api = api();
    let id = api.session().await;
    let (s, _) = api.call(Method::POST, &format!("/v1/sessions/{id}/cancel"), None).await;
    assert_eq!(s, StatusCode::ACCEPTED);
    api.json(Method::POST, &format!("/v1/sessions/{id}/qis"), Some(json!({"qis": ["age", "sex"]})))
        .await;
    let (s, _) = api.call(Method::POST, &format!("/v1/sessions/{id}/steps/cluster"), None).await;
    assert_eq!(s, StatusCode::OK);
    let (s, _) = api.call(Method::POST, "/v1/sessions/nope/cancel", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn collection_and_dataset_risk() {
    let api = api();
    let (s, body) = api.json(Method::GET, "/v1/collection", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(body["datasets"].as_array().unwrap().len(), 11);
    assert_eq!(body["funnel"]["stages"][3]["count"], 11);

    let (s, risk) = api
        .json(Method::GET, "/v1/datasets/nola.example:epr-2015/risk?keys=victim%20age,victim%20gender&threshold=1", None)
        .await;
    assert_eq!(s, StatusCode::OK, "{risk}");
    assert_eq!(risk["summary"]["key_attrs"], json!(["victim age", "victim gender"]));
    assert!(risk["summary"]["k"].as_u64().unwrap() >= 1);

    let (s, auto) = api
        .json(Method::GET, "/v1/datasets/nola.example:epr-2015/risk", None)
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(auto["summary"]["key_attrs"].as_array().unwrap().len(), 6);

    let (s, body) = api.json(Method::GET, "/v1/datasets/nowhere/risk", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(code(&body), "UnknownDataset");
    let (s, body) = api
        .json(Method::GET, "/v1/datasets/nola.example:epr-2015/risk?keys=shoe%20size", None)
        .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(code(&body), "UnknownAttribute");
}
