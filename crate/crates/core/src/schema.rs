//! Parametric design scenarios and the records that describe one design.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioId {
    Drilling,
    Milling,
    Combined,
}

impl ScenarioId {
    pub const ALL: [ScenarioId; 3] = [ScenarioId::Drilling, ScenarioId::Milling, ScenarioId::Combined];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioId::Drilling => "drilling",
            ScenarioId::Milling => "milling",
            ScenarioId::Combined => "combined",
        }
    }

    pub fn has_hole(self) -> bool {
        matches!(self, ScenarioId::Drilling | ScenarioId::Combined)
    }

    pub fn has_pocket(self) -> bool {
        matches!(self, ScenarioId::Milling | ScenarioId::Combined)
    }
}

impl fmt::Display for ScenarioId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "drilling" => Ok(ScenarioId::Drilling),
            "milling" => Ok(ScenarioId::Milling),
            "combined" => Ok(ScenarioId::Combined),
            other => Err(Error::InvalidArgument(format!("unknown scenario `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureRole {
    BlockDim,
    FeatureDim,
    Position,
    TolUpper,
    TolLower,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub description: String,
    pub unit: String,
    pub min: f64,
    pub max: f64,
    pub role: FeatureRole,
    /// Dimension a tolerance bound applies to.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub linked_dimension: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSchema {
    pub scenario_id: ScenarioId,
    pub features: Vec<FeatureSpec>,
}

pub const TOL_MIN: f64 = -0.5;
pub const TOL_MAX: f64 = 0.5;

fn dim(name: &str, description: &str, min: f64, max: f64, role: FeatureRole) -> FeatureSpec {
    FeatureSpec {
        name: name.to_string(),
        description: description.to_string(),
        unit: "mm".to_string(),
        min,
        max,
        role,
        linked_dimension: None,
    }
}

fn tolerances(dims: &[&str]) -> Vec<FeatureSpec> {
    let mut out = Vec::with_capacity(dims.len() * 2);
    for d in dims {
        for (suffix, role, word) in [
            ("UT", FeatureRole::TolUpper, "upper"),
            ("LT", FeatureRole::TolLower, "lower"),
        ] {
            out.push(FeatureSpec {
                name: format!("{d}_{suffix}"),
                description: format!("{d} {word} tolerance"),
                unit: "mm".to_string(),
                min: TOL_MIN,
                max: TOL_MAX,
                role,
                linked_dimension: Some(d.to_string()),
            });
        }
    }
    out
}

impl ScenarioSchema {
    pub fn for_scenario(id: ScenarioId) -> Self {
        use FeatureRole::*;
        let features = match id {
            ScenarioId::Drilling => {
                let mut f = vec![
                    dim("B1", "Block length", 15.0, 200.0, BlockDim),
                    dim("B2", "Block width", 14.0, 199.3, BlockDim),
                    dim("B3", "Block height", 4.0, 200.0, BlockDim),
                    dim("H1", "Hole diameter", 1.0, 30.0, FeatureDim),
                    dim("H2", "Hole depth", 4.0, 198.9, FeatureDim),
                    dim("H3", "Hole x position", 1.5, 196.2, Position),
                    dim("H4", "Hole y position", 1.5, 177.6, Position),
                ];
                f.extend(tolerances(&["H1", "H2", "H3", "H4"]));
                f
            }
            ScenarioId::Milling => {
                let mut f = vec![
                    dim("B1", "Block length", 15.0, 200.0, BlockDim),
                    dim("B2", "Block width", 14.0, 199.3, BlockDim),
                    dim("B3", "Block height", 4.0, 200.0, BlockDim),
                    dim("P1", "Pocket length", 3.4, 193.7, FeatureDim),
                    dim("P2", "Pocket width", 3.0, 180.0, FeatureDim),
                    dim("P3", "Pocket corner radius", 0.0, 25.0, FeatureDim),
                    dim("P4", "Pocket depth", 2.0, 195.2, FeatureDim),
                    dim("P5", "Pocket x position", 0.6, 182.0, Position),
                    dim("P6", "Pocket y position", 0.6, 155.8, Position),
                ];
                f.extend(tolerances(&["P1", "P2", "P4", "P5", "P6"]));
                f
            }
            ScenarioId::Combined => {
                let mut f = vec![
                    dim("B1", "Block length", 25.3, 300.0, BlockDim),
                    dim("B2", "Block width", 16.2, 296.7, BlockDim),
                    dim("B3", "Block height", 4.0, 299.9, BlockDim),
                    dim("H1", "Hole diameter", 1.0, 30.0, FeatureDim),
                    dim("H2", "Hole depth", 2.0, 297.1, FeatureDim),
                    dim("H3", "Hole x position", 1.7, 294.0, Position),
                    dim("H4", "Hole y position", 1.6, 289.8, Position),
                    dim("P1", "Pocket length", 5.8, 150.0, FeatureDim),
                    dim("P2", "Pocket width", 3.2, 148.5, FeatureDim),
                    dim("P3", "Pocket corner radius", 0.0, 25.0, FeatureDim),
                    dim("P4", "Pocket depth", 2.0, 294.7, FeatureDim),
                    dim("P5", "Pocket x position", 0.6, 284.2, Position),
                    dim("P6", "Pocket y position", 0.6, 270.4, Position),
                ];
                f.extend(tolerances(&["H1", "H2", "H3", "H4"]));
                f.extend(tolerances(&["P1", "P2", "P4", "P5", "P6"]));
                f
            }
        };
        ScenarioSchema { scenario_id: id, features }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    /// Per-feature range violations as `(feature, message)` pairs.
    pub fn range_errors(&self, values: &[f64]) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for (f, &v) in self.features.iter().zip(values) {
            if !v.is_finite() {
                out.push((f.name.clone(), "value must be a finite number".to_string()));
            } else if v < f.min || v > f.max {
                out.push((
                    f.name.clone(),
                    format!("{v} outside [{}, {}] {}", f.min, f.max, f.unit),
                ));
            }
        }
        out
    }
}

/// One parametric design: values follow the schema's feature order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRecord {
    pub scenario: ScenarioId,
    pub values: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
}

/// A field-level validation problem in a named-parameter design.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl DesignRecord {
    pub fn new(scenario: ScenarioId, values: Vec<f64>) -> Self {
        DesignRecord { scenario, values, label: None }
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.label = Some(label);
        self
    }

    pub fn get(&self, schema: &ScenarioSchema, name: &str) -> Option<f64> {
        schema.index_of(name).map(|i| self.values[i])
    }

    pub fn set(&mut self, schema: &ScenarioSchema, name: &str, value: f64) -> Result<()> {
        let i = schema
            .index_of(name)
            .ok_or_else(|| Error::SchemaMismatch(format!("unknown feature `{name}`")))?;
        self.values[i] = value;
        Ok(())
    }

    pub fn check_schema(&self, schema: &ScenarioSchema) -> Result<()> {
        if self.scenario != schema.scenario_id {
            return Err(Error::SchemaMismatch(format!(
                "record is `{}`, schema is `{}`",
                self.scenario, schema.scenario_id
            )));
        }
        if self.values.len() != schema.len() {
            return Err(Error::SchemaMismatch(format!(
                "record has {} values, schema has {} features",
                self.values.len(),
                schema.len()
            )));
        }
        Ok(())
    }

    /// Builds a record from a name -> value map. Every schema feature must be
    /// present and no unknown names are allowed.
    pub fn from_params(
        schema: &ScenarioSchema,
        params: &BTreeMap<String, f64>,
    ) -> std::result::Result<Self, Vec<FieldError>> {
        let mut errors = Vec::new();
        for name in params.keys() {
            if schema.index_of(name).is_none() {
                errors.push(FieldError {
                    field: name.clone(),
                    message: "unknown parameter".into(),
                });
            }
        }
        let mut values = Vec::with_capacity(schema.len());
        for f in &schema.features {
            match params.get(&f.name) {
                Some(&v) => values.push(v),
                None => {
                    errors.push(FieldError {
                        field: f.name.clone(),
                        message: "missing parameter".into(),
                    });
                    values.push(f64::NAN);
                }
            }
        }
        if errors.is_empty() {
            Ok(DesignRecord::new(schema.scenario_id, values))
        } else {
            Err(errors)
        }
    }

    pub fn to_params(&self, schema: &ScenarioSchema) -> BTreeMap<String, f64> {
        schema
            .features
            .iter()
            .zip(&self.values)
            .map(|(f, &v)| (f.name.clone(), v))
            .collect()
    }
}
