use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use kan_dfm::datagen::{generate_dataset, save_csv, GenConfig};
use kan_dfm::rules::RuleEngine;
use kan_dfm::schema::ScenarioId;
use kan_dfm::trainer::{train, TrainConfig};
use kan_dfm_cli::background_path;
use kan_dfm_cli::service::{load_models, router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

fn params() -> Value {
    json!({
        "B1": 100.0, "B2": 60.0, "B3": 40.0, "H1": 8.0, "H2": 20.0, "H3": 50.0, "H4": 30.0,
        "H1_UT": 0.1, "H1_LT": -0.1, "H2_UT": 0.1, "H2_LT": -0.1,
        "H3_UT": 0.1, "H3_LT": -0.1, "H4_UT": 0.1, "H4_LT": -0.1
    })
}

/// Small drilling model saved with its background sample.
fn app() -> (axum::Router, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let engine = RuleEngine::default();
    let (records, _) = generate_dataset(&engine, &GenConfig::new(ScenarioId::Drilling, 400, 1)).unwrap();
    let cfg = TrainConfig { max_steps: 3, ..TrainConfig::adam() };
    let out = train(&records, &cfg).unwrap();
    let path = dir.path().join("drill.json");
    out.model.save(&path).unwrap();
    save_csv(&records[..50], ScenarioId::Drilling, background_path(&path)).unwrap();
    let models = load_models(dir.path()).unwrap();
    (router(Arc::new(AppState::new(models, engine, 2))), dir)
}

async fn call(app: &axum::Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = match body {
        Some(b) => req.body(Body::from(b.to_string())).unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

#[tokio::test]
async fn health_and_scenarios() {
    let (app, _dir) = app();
    let (st, h) = call(&app, "GET", "/api/health", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(h["models"][0]["id"], "drill");
    assert_eq!(h["models"][0]["hash"].as_str().unwrap().len(), 64);
    let (_, again) = call(&app, "GET", "/api/health", None).await;
    assert_eq!(h, again);

    let (st, s) = call(&app, "GET", "/api/scenarios", None).await;
    assert_eq!(st, StatusCode::OK);
    let list = s.as_array().unwrap();
    assert_eq!(list.len(), 3);
    assert_eq!(list[0]["features"].as_array().unwrap().len(), 15);
    assert_eq!(list[0]["features"][0]["unit"], "mm");
    assert_eq!(list[0]["models"][0], "drill");
}

#[tokio::test]
async fn predict_is_validated_and_stateless() {
    let (app, _dir) = app();
    let body = json!({"scenario_id": "drilling", "params": params()});
    let (st, a) = call(&app, "POST", "/api/predict", Some(body.clone())).await;
    assert_eq!(st, StatusCode::OK, "{a}");
    let p = a["probability"].as_f64().unwrap();
    assert!(p > 0.0 && p < 1.0);
    assert_eq!(a["label"].as_u64().unwrap(), u64::from(p >= 0.5));
    assert_eq!(a["model_id"], "drill");
    assert!(a["clamped_features"].as_array().unwrap().is_empty());
    let (_, b) = call(&app, "POST", "/api/predict", Some(body)).await;
    assert_eq!(a, b);

    let mut missing = params();
    missing.as_object_mut().unwrap().remove("H2");
    let (st, e) = call(&app, "POST", "/api/predict", Some(json!({"scenario_id": "drilling", "params": missing}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(e["field"], "H2");
    assert!(e["code"].is_string() && e["message"].is_string());

    let mut stringly = params();
    stringly["H1"] = json!("8");
    let (st, e) = call(&app, "POST", "/api/predict", Some(json!({"scenario_id": "drilling", "params": stringly}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(e["field"], "H1");

    let (st, e) = call(&app, "POST", "/api/predict", Some(json!({"scenario_id": "drilling", "params": params(), "model_id": "nope"}))).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(e["code"], "unknown_model");

    let (st, _) = call(&app, "POST", "/api/predict", Some(json!({"scenario_id": "milling", "params": {}}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn explain_reports_efficiency_and_top_lists() {
    let (app, _dir) = app();
    let body = json!({"scenario_id": "drilling", "params": params(), "budget": 60, "top_k": 3});
    let (st, r) = call(&app, "POST", "/api/explain", Some(body.clone())).await;
    assert_eq!(st, StatusCode::OK, "{r}");
    assert_eq!(r["method"], "sampled");
    assert!(r["efficiency_residual"].as_f64().unwrap() < 1e-9);
    let pos = r["top_positive"].as_array().unwrap();
    assert!(pos.len() <= 3);
    assert!(pos.iter().all(|f| f["contribution"].as_f64().unwrap() > 0.0));
    let ranks: Vec<u64> = pos.iter().map(|f| f["rank"].as_u64().unwrap()).collect();
    assert!(ranks.windows(2).all(|w| w[0] < w[1]));
    let (_, again) = call(&app, "POST", "/api/explain", Some(body)).await;
    assert_eq!(r, again);

    let (st, e) = call(&app, "POST", "/api/explain", Some(json!({"scenario_id": "drilling", "params": params(), "budget": 3}))).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(e["field"], "budget");
}

#[tokio::test]
async fn rules_check_returns_violations() {
    let (app, _dir) = app();
    let mut deep = params();
    deep["H1"] = json!(5.0);
    deep["H2"] = json!(30.0);
    let (st, r) = call(&app, "POST", "/api/rules/check", Some(json!({"scenario_id": "drilling", "params": deep}))).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(r["manufacturable"], false);
    assert!(!r["violations"].as_array().unwrap().is_empty());
    let (_, ok) = call(&app, "POST", "/api/rules/check", Some(json!({"scenario_id": "drilling", "params": params()}))).await;
    assert_eq!(ok["manufacturable"], true, "{ok}");
}

#[tokio::test]
async fn model_exports() {
    let (app, _dir) = app();
    let (st, s) = call(&app, "GET", "/api/model/drill/splines?points=5", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(s["grid"].as_array().unwrap().len(), 5);
    assert_eq!(s["edges"].as_array().unwrap().len(), 15 * 16 + 16 * 2 + 2);
    assert_eq!(s["feature_activity"].as_array().unwrap().len(), 15);

    let (st, l) = call(&app, "GET", "/api/model/drill/latent", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(l["rows"].as_array().unwrap().len(), 50);

    let (st, e) = call(&app, "GET", "/api/model/missing/splines", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(e["code"], "unknown_model");
    let (st, _) = call(&app, "GET", "/api/nothing", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}
