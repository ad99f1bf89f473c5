//! Shared pieces of the `kan-dfm` command-line tool and HTTP service.

pub mod service;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use kan_dfm::interpret::{self, AttributionReport, FeatureAttribution};
use kan_dfm::kan::KanModel;
use kan_dfm::rules::{RuleEngine, RuleSet};
use kan_dfm::schema::{DesignRecord, FieldError, ScenarioId, ScenarioSchema};
use serde::Serialize;
use serde_json::Value;

/// Environment variable that overrides `--rules`.
pub const RULES_ENV: &str = "KAN_DFM_RULES";

/// Attribution sizes used when the caller gives no budget.
pub const DEFAULT_BUDGET_PER_FEATURE: usize = 200;
pub const DEFAULT_TOP_K: usize = 5;

/// Request-level failure with an optional offending field.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub errors: Vec<FieldError>,
}

impl ApiError {
    pub fn new(status: u16, code: &str, message: impl Into<String>) -> Self {
        ApiError { status, code: code.into(), message: message.into(), field: None, errors: Vec::new() }
    }

    pub fn field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }

    fn from_fields(errors: Vec<FieldError>) -> Self {
        let first = &errors[0];
        ApiError {
            status: 400,
            code: "invalid_parameter".into(),
            message: format!("{}: {}", first.field, first.message),
            field: Some(first.field.clone()),
            errors,
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({})", self.message, self.code)
    }
}

impl std::error::Error for ApiError {}

/// Parses `{"scenario_id": .., "params": {name: number}}` and validates it
/// against the schema. Numbers given as strings are rejected. When
/// `scenario_id` is absent, `default_scenario` is used.
pub fn parse_design(body: &Value, default_scenario: Option<ScenarioId>) -> Result<DesignRecord, ApiError> {
    let obj = body.as_object().ok_or_else(|| ApiError::new(400, "invalid_body", "request body must be a JSON object"))?;
    let scenario = match obj.get("scenario_id") {
        Some(Value::String(s)) => s.parse::<ScenarioId>().map_err(|e| ApiError::new(400, "invalid_parameter", e.to_string()).field("scenario_id"))?,
        Some(_) => return Err(ApiError::new(400, "invalid_parameter", "scenario_id must be a string").field("scenario_id")),
        None => default_scenario.ok_or_else(|| ApiError::new(400, "missing_parameter", "scenario_id is required").field("scenario_id"))?,
    };
    let params = obj
        .get("params")
        .ok_or_else(|| ApiError::new(400, "missing_parameter", "params is required").field("params"))?
        .as_object()
        .ok_or_else(|| ApiError::new(400, "invalid_parameter", "params must be an object").field("params"))?;
    let mut errors = Vec::new();
    let mut values = BTreeMap::new();
    for (name, v) in params {
        match v.as_f64() {
            Some(x) if v.is_number() => {
                values.insert(name.clone(), x);
            }
            _ => errors.push(FieldError { field: name.clone(), message: "value must be a JSON number".into() }),
        }
    }
    let schema = ScenarioSchema::for_scenario(scenario);
    let record = match DesignRecord::from_params(&schema, &values) {
        Ok(r) if errors.is_empty() => r,
        Ok(_) => return Err(ApiError::from_fields(errors)),
        Err(mut e) => {
            // a non-numeric value also shows up as missing; keep one message per field
            e.retain(|f| !errors.iter().any(|g| g.field == f.field));
            errors.extend(e);
            return Err(ApiError::from_fields(errors));
        }
    };
    let range = schema.range_errors(&record.values);
    if !range.is_empty() {
        return Err(ApiError::from_fields(range.into_iter().map(|(field, message)| FieldError { field, message }).collect()));
    }
    Ok(record)
}

/// Rules from `KAN_DFM_RULES`, else `path`, else the built-in set.
pub fn load_rules(path: Option<&Path>) -> anyhow::Result<RuleEngine> {
    let env = std::env::var_os(RULES_ENV).map(PathBuf::from);
    let rules = match env.as_deref().or(path) {
        Some(p) => RuleSet::load(p).map_err(|e| anyhow::anyhow!("cannot load rules from {}: {e}", p.display()))?,
        None => RuleSet::standard(),
    };
    Ok(RuleEngine::new(rules))
}

/// File holding the attribution background saved next to a model.
pub fn background_path(model_path: &Path) -> PathBuf {
    let stem = model_path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    model_path.with_file_name(format!("{stem}.background.csv"))
}

/// Single-record background at the centre of the model's training ranges,
/// used when no saved background exists.
pub fn centre_background(model: &KanModel) -> Vec<DesignRecord> {
    let mid = vec![0.5; model.n_inputs()];
    vec![DesignRecord::new(model.scenario_id, model.scaler.inverse(&mid))]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplainResponse {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    pub probability: f64,
    pub label: u8,
    pub tau: f64,
    #[serde(flatten)]
    pub report: AttributionReport,
    /// Largest positive contributions, strongest first.
    pub top_positive: Vec<FeatureAttribution>,
    /// Largest negative contributions, strongest first.
    pub top_negative: Vec<FeatureAttribution>,
}

pub fn explain(
    model: &KanModel,
    record: &DesignRecord,
    background: &[DesignRecord],
    budget: Option<usize>,
    top_k: usize,
    seed: u64,
) -> kan_dfm::Result<ExplainResponse> {
    let budget = budget.unwrap_or(DEFAULT_BUDGET_PER_FEATURE * model.n_inputs());
    let report = interpret::shapley_attribution(model, record, background, budget, seed)?;
    let mut by_rank = report.features.clone();
    by_rank.sort_by_key(|f| f.rank);
    let top_positive = by_rank.iter().filter(|f| f.contribution > 0.0).take(top_k).cloned().collect();
    let top_negative = by_rank.iter().filter(|f| f.contribution < 0.0).take(top_k).cloned().collect();
    Ok(ExplainResponse {
        model_id: None,
        probability: report.output,
        label: kan_dfm::kan::classify(report.output, model.threshold_tau),
        tau: model.threshold_tau,
        report,
        top_positive,
        top_negative,
    })
}
