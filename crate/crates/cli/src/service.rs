//! JSON HTTP service over a directory of trained models.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use kan_dfm::interpret::{self, LatentRow};
use kan_dfm::kan::{KanModel, INPUT_DOMAIN};
use kan_dfm::rules::RuleEngine;
use kan_dfm::schema::{DesignRecord, ScenarioId, ScenarioSchema};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Semaphore;

use crate::{background_path, centre_background, parse_design, ApiError, DEFAULT_TOP_K};

pub struct ModelEntry {
    pub id: String,
    pub model: KanModel,
    /// Checksum stored in the model file.
    pub hash: String,
    pub background: Vec<DesignRecord>,
    /// Whether `background` came from a saved training sample.
    pub saved_background: bool,
}

pub struct AppState {
    pub models: BTreeMap<String, Arc<ModelEntry>>,
    pub engine: RuleEngine,
    /// Bounds concurrent attribution jobs.
    pub explain_slots: Semaphore,
    pub seed: u64,
}

impl AppState {
    pub fn new(models: Vec<ModelEntry>, engine: RuleEngine, explain_workers: usize) -> Self {
        AppState {
            models: models.into_iter().map(|m| (m.id.clone(), Arc::new(m))).collect(),
            engine,
            explain_slots: Semaphore::new(explain_workers.max(1)),
            seed: 0,
        }
    }

    fn model_for(&self, id: Option<&str>, scenario: ScenarioId) -> Result<Arc<ModelEntry>, ApiError> {
        match id {
            Some(id) => {
                let m = self.models.get(id).ok_or_else(|| ApiError::new(404, "unknown_model", format!("no model `{id}`")).field("model_id"))?;
                if m.model.scenario_id != scenario {
                    return Err(ApiError::new(400, "scenario_mismatch", format!("model `{id}` is for {}", m.model.scenario_id)).field("scenario_id"));
                }
                Ok(m.clone())
            }
            None => self
                .models
                .values()
                .find(|m| m.model.scenario_id == scenario)
                .cloned()
                .ok_or_else(|| ApiError::new(404, "unknown_model", format!("no model loaded for {scenario}")).field("scenario_id")),
        }
    }

    fn model(&self, id: &str) -> Result<Arc<ModelEntry>, ApiError> {
        self.models.get(id).cloned().ok_or_else(|| ApiError::new(404, "unknown_model", format!("no model `{id}`")))
    }
}

/// Loads every `*.json` model in `dir`; the id is the file stem. A
/// `<id>.background.csv` next to a model is used as its attribution background.
pub fn load_models(dir: &Path) -> anyhow::Result<Vec<ModelEntry>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json") && !p.to_string_lossy().ends_with(".manifest.json"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for p in paths {
        let text = std::fs::read_to_string(&p)?;
        let model = KanModel::from_json(&text).map_err(|e| anyhow::anyhow!("{}: {e}", p.display()))?;
        let hash = serde_json::from_str::<Value>(&text)?["checksum"].as_str().unwrap_or_default().to_string();
        let bg = background_path(&p);
        let (background, saved) = if bg.exists() {
            let (_, recs) = kan_dfm::datagen::load_csv(&bg).map_err(|e| anyhow::anyhow!("{}: {e}", bg.display()))?;
            (recs, true)
        } else {
            (centre_background(&model), false)
        };
        let id = p.file_stem().unwrap().to_string_lossy().into_owned();
        out.push(ModelEntry { id, model, hash, background, saved_background: saved });
    }
    Ok(out)
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

fn body_json(bytes: &Bytes) -> Result<Value, ApiError> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::new(400, "invalid_json", e.to_string()))
}

fn optional_str<'a>(body: &'a Value, key: &str) -> Result<Option<&'a str>, ApiError> {
    match body.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => Ok(Some(s)),
        Some(_) => Err(ApiError::new(400, "invalid_parameter", format!("{key} must be a string")).field(key)),
    }
}

fn optional_usize(body: &Value, key: &str) -> Result<Option<usize>, ApiError> {
    match body.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => v
            .as_u64()
            .map(|n| Some(n as usize))
            .ok_or_else(|| ApiError::new(400, "invalid_parameter", format!("{key} must be a non-negative integer")).field(key)),
    }
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError::new(500, "internal", e.to_string())
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/health", get(health))
        .route("/api/scenarios", get(scenarios))
        .route("/api/predict", post(predict))
        .route("/api/explain", post(explain))
        .route("/api/rules/check", post(rules_check))
        .route("/api/model/{id}/splines", get(splines))
        .route("/api/model/{id}/latent", get(latent))
        .fallback(|| async { ApiError::new(404, "not_found", "no such endpoint") })
        .with_state(state)
}

async fn health(State(s): State<Arc<AppState>>) -> Json<Value> {
    let models: Vec<Value> = s
        .models
        .values()
        .map(|m| json!({"id": m.id, "scenario_id": m.model.scenario_id, "hash": m.hash}))
        .collect();
    Json(json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "rules_hash": s.engine.rule_hash(),
        "models": models,
    }))
}

#[derive(Serialize)]
struct ScenarioInfo {
    scenario_id: ScenarioId,
    features: Vec<kan_dfm::schema::FeatureSpec>,
    models: Vec<String>,
}

async fn scenarios(State(s): State<Arc<AppState>>) -> Json<Vec<ScenarioInfo>> {
    Json(
        ScenarioId::ALL
            .iter()
            .map(|&id| ScenarioInfo {
                scenario_id: id,
                features: ScenarioSchema::for_scenario(id).features,
                models: s.models.values().filter(|m| m.model.scenario_id == id).map(|m| m.id.clone()).collect(),
            })
            .collect(),
    )
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PredictResponse {
    pub probability: f64,
    pub label: u8,
    pub tau: f64,
    /// Features whose scaled value falls outside the first layer's knot span.
    pub clamped_features: Vec<String>,
    pub model_id: String,
}

async fn predict(State(s): State<Arc<AppState>>, bytes: Bytes) -> ApiResult<PredictResponse> {
    let body = body_json(&bytes)?;
    let record = parse_design(&body, None)?;
    let entry = s.model_for(optional_str(&body, "model_id")?, record.scenario)?;
    let m = &entry.model;
    let f = m.forward(&record).map_err(internal)?;
    let span = m.layers()[0].knots().span();
    debug_assert_eq!(m.layers()[0].knots().domain(), INPUT_DOMAIN);
    let clamped_features = m
        .scale(&record.values)
        .iter()
        .zip(&m.feature_names)
        .filter(|(v, _)| **v < span.0 || **v > span.1)
        .map(|(_, n)| n.clone())
        .collect();
    Ok(Json(PredictResponse {
        probability: f.prob,
        label: kan_dfm::kan::classify(f.prob, m.threshold_tau),
        tau: m.threshold_tau,
        clamped_features,
        model_id: entry.id.clone(),
    }))
}

async fn explain(State(s): State<Arc<AppState>>, bytes: Bytes) -> ApiResult<crate::ExplainResponse> {
    let body = body_json(&bytes)?;
    let record = parse_design(&body, None)?;
    let entry = s.model_for(optional_str(&body, "model_id")?, record.scenario)?;
    let budget = optional_usize(&body, "budget")?;
    let top_k = optional_usize(&body, "top_k")?.unwrap_or(DEFAULT_TOP_K);
    if let Some(b) = budget {
        if b < 2 * entry.model.n_inputs() {
            return Err(ApiError::new(400, "invalid_parameter", format!("budget must be at least {}", 2 * entry.model.n_inputs())).field("budget"));
        }
    }
    let _slot = s.explain_slots.acquire().await.map_err(internal)?;
    let seed = s.seed;
    let job = entry.clone();
    let mut resp = tokio::task::spawn_blocking(move || crate::explain(&job.model, &record, &job.background, budget, top_k, seed))
        .await
        .map_err(internal)?
        .map_err(internal)?;
    resp.model_id = Some(entry.id.clone());
    Ok(Json(resp))
}

async fn rules_check(State(s): State<Arc<AppState>>, bytes: Bytes) -> ApiResult<kan_dfm::rules::RuleReport> {
    let body = body_json(&bytes)?;
    let record = parse_design(&body, None)?;
    s.engine.check(&record).map(Json).map_err(|e| ApiError::new(400, "invalid_design", e.to_string()))
}

#[derive(Deserialize)]
struct SplineQuery {
    points: Option<usize>,
}

#[derive(Serialize)]
struct SplineResponse {
    model_id: String,
    #[serde(flatten)]
    curves: interpret::SplineCurveSet,
    /// Input features by first-layer activity, highest first.
    feature_activity: Vec<(String, f64)>,
}

async fn splines(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>, Query(q): Query<SplineQuery>) -> ApiResult<SplineResponse> {
    let entry = s.model(&id)?;
    let points = q.points.unwrap_or(101);
    if !(2..=10_000).contains(&points) {
        return Err(ApiError::new(400, "invalid_parameter", "points must be between 2 and 10000").field("points"));
    }
    let curves = interpret::export_splines(&entry.model, points).map_err(internal)?;
    let feature_activity = interpret::feature_activity(&entry.model, &curves);
    Ok(Json(SplineResponse { model_id: id, curves, feature_activity }))
}

#[derive(Serialize)]
struct LatentResponse {
    model_id: String,
    rows: Vec<LatentRow>,
}

async fn latent(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<LatentResponse> {
    let entry = s.model(&id)?;
    if !entry.saved_background {
        return Err(ApiError::new(404, "no_latent_data", format!("model `{id}` has no saved record sample")));
    }
    let rows = interpret::export_latent(&entry.model, &entry.background).map_err(|e| ApiError::new(400, "architecture", e.to_string()))?;
    Ok(Json(LatentResponse { model_id: id, rows }))
}
