//! Kolmogorov-Arnold network built from B-spline edges.
//!
//! Layer `l` maps `x` to `z_j = sum_i phi_ij(x_i)`; the last layer has a
//! single output that goes through a logistic function. Coefficients are
//! stored flat per layer in input-major, then output, then basis order.
//!
//! The first layer's knots cover the scaled input domain `[0, 1]`; hidden
//! layers use `[-1, 1]`. Values outside a layer's extended knot span are
//! clamped to the span edge and reported through [`Forward::clamped`].

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{bce_term, PROB_EPS};
use crate::prep::Scaler;
use crate::rules::sha256_hex;
use crate::schema::{DesignRecord, ScenarioId};
use crate::spline::{eval_local, KnotVector, LocalBasis, SplineEdge};

pub const FORMAT_VERSION: u32 = 1;
pub const INPUT_DOMAIN: (f64, f64) = (0.0, 1.0);
pub const HIDDEN_DOMAIN: (f64, f64) = (-1.0, 1.0);
pub const DEFAULT_TAU: f64 = 0.5;

/// Samples per parallel work unit. Partial sums are combined in chunk order,
/// so results do not depend on the thread count.
const CHUNK: usize = 128;

#[derive(Debug, Clone, PartialEq)]
pub struct KanLayer {
    d_in: usize,
    d_out: usize,
    knots: KnotVector,
    coefficients: Vec<f64>,
}

impl KanLayer {
    pub fn zeros(d_in: usize, d_out: usize, knots: KnotVector) -> Result<Self> {
        if d_in == 0 || d_out == 0 {
            return Err(Error::InvalidArgument("layer widths must be at least 1".into()));
        }
        let n = d_in * d_out * knots.n_basis();
        Ok(KanLayer { d_in, d_out, knots, coefficients: vec![0.0; n] })
    }

    pub fn from_coefficients(d_in: usize, d_out: usize, knots: KnotVector, coefficients: Vec<f64>) -> Result<Self> {
        let mut layer = Self::zeros(d_in, d_out, knots)?;
        if coefficients.len() != layer.coefficients.len() {
            return Err(Error::DimensionMismatch {
                expected: layer.coefficients.len(),
                got: coefficients.len(),
            });
        }
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("layer coefficient".into()));
        }
        layer.coefficients = coefficients;
        Ok(layer)
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn knots(&self) -> &KnotVector {
        &self.knots
    }

    pub fn n_basis(&self) -> usize {
        self.knots.n_basis()
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn coefficients_mut(&mut self) -> &mut [f64] {
        &mut self.coefficients
    }

    fn offset(&self, i: usize, j: usize) -> usize {
        (i * self.d_out + j) * self.n_basis()
    }

    pub fn edge_coefficients(&self, i: usize, j: usize) -> &[f64] {
        let o = self.offset(i, j);
        &self.coefficients[o..o + self.n_basis()]
    }

    pub fn set_edge(&mut self, i: usize, j: usize, coefficients: &[f64]) -> Result<()> {
        if i >= self.d_in || j >= self.d_out {
            return Err(Error::IndexOutOfRange { index: i.max(j), len: self.d_in.max(self.d_out) });
        }
        if coefficients.len() != self.n_basis() {
            return Err(Error::DimensionMismatch { expected: self.n_basis(), got: coefficients.len() });
        }
        let o = self.offset(i, j);
        self.coefficients[o..o + coefficients.len()].copy_from_slice(coefficients);
        Ok(())
    }

    /// Edge `(i, j)` as a standalone spline.
    pub fn edge(&self, i: usize, j: usize) -> SplineEdge {
        SplineEdge {
            knots: self.knots.clone(),
            coefficients: self.edge_coefficients(i, j).to_vec(),
        }
    }

    /// Evaluates the layer, clamping inputs to the knot span. Returns the
    /// outputs and whether any input was clamped.
    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, bool)> {
        if x.len() != self.d_in {
            return Err(Error::DimensionMismatch { expected: self.d_in, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer input".into()));
        }
        let mut out = vec![0.0; self.d_out];
        let mut clamped = false;
        for (i, &xi) in x.iter().enumerate() {
            let (xc, c) = self.knots.clamp(xi);
            clamped |= c;
            let local = self.knots.local(xc);
            for (j, o) in out.iter_mut().enumerate() {
                *o += eval_local(&local, self.edge_coefficients(i, j));
            }
        }
        Ok((out, clamped))
    }
}

/// `x_j = sum_i phi_ij(x_i)` for one layer.
pub fn layer_forward(layer: &KanLayer, x: &[f64]) -> Result<Vec<f64>> {
    layer.forward(x).map(|(out, _)| out)
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `1` when `prob >= tau`.
pub fn classify(prob: f64, tau: f64) -> u8 {
    u8::from(prob >= tau)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub prob: f64,
    pub logit: f64,
    /// Input to every layer (the scaled features first), then the final logit.
    pub activations: Vec<Vec<f64>>,
    pub clamped: bool,
}

/// Coefficient gradients in the model's layout.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<Vec<f64>>,
}

impl GradientSet {
    pub fn flat(&self) -> Vec<f64> {
        self.layers.concat()
    }

    pub fn max_abs(&self) -> f64 {
        self.layers.iter().flatten().fold(0.0, |m, g| m.max(g.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplineConfig {
    pub grid: usize,
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KanModel {
    pub scenario_id: ScenarioId,
    pub feature_names: Vec<String>,
    pub scaler: Scaler,
    pub threshold_tau: f64,
    spline: SplineConfig,
    layers: Vec<KanLayer>,
}

/// Per-sample scratch space for forward and backward passes.
struct Workspace {
    acts: Vec<Vec<f64>>,
    locals: Vec<Vec<LocalBasis>>,
    clamped: Vec<Vec<bool>>,
    delta: Vec<f64>,
    delta_next: Vec<f64>,
}

impl KanModel {
    /// Model with all coefficients zero. `hidden` lists hidden-layer widths;
    /// the input width is `feature_names.len()` and the output width is 1.
    pub fn zeros(
        scenario_id: ScenarioId,
        feature_names: Vec<String>,
        scaler: Scaler,
        hidden: &[usize],
        grid: usize,
        k: usize,
    ) -> Result<Self> {
        if scaler.len() != feature_names.len() {
            return Err(Error::SchemaMismatch(format!(
                "scaler has {} features, model has {}",
                scaler.len(),
                feature_names.len()
            )));
        }
        let mut widths = vec![feature_names.len()];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let mut layers = Vec::with_capacity(widths.len() - 1);
        for (l, w) in widths.windows(2).enumerate() {
            let (lo, hi) = if l == 0 { INPUT_DOMAIN } else { HIDDEN_DOMAIN };
            layers.push(KanLayer::zeros(w[0], w[1], KnotVector::uniform(grid, k, lo, hi)?)?);
        }
        Ok(KanModel {
            scenario_id,
            feature_names,
            scaler,
            threshold_tau: DEFAULT_TAU,
            spline: SplineConfig { grid, k },
            layers,
        })
    }

    /// Model with coefficients drawn from `U(-a, a)`, `a = 1 / sqrt(d_in * M)`.
    pub fn init(
        scenario_id: ScenarioId,
        feature_names: Vec<String>,
        scaler: Scaler,
        hidden: &[usize],
        grid: usize,
        k: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut model = Self::zeros(scenario_id, feature_names, scaler, hidden, grid, k)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in &mut model.layers {
            let a = 1.0 / ((layer.d_in * layer.n_basis()) as f64).sqrt();
            for c in &mut layer.coefficients {
                *c = rng.gen_range(-a..a);
            }
        }
        Ok(model)
    }

    pub fn layers(&self) -> &[KanLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [KanLayer] {
        &mut self.layers
    }

    pub fn spline(&self) -> SplineConfig {
        self.spline
    }

    /// Full width list `[d_in, hidden.., 1]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].d_in];
        w.extend(self.layers.iter().map(|l| l.d_out));
        w
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].d_in
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.coefficients.len()).sum()
    }

    pub fn params(&self) -> Vec<f64> {
        self.layers.iter().flat_map(|l| l.coefficients.iter().copied()).collect()
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::DimensionMismatch { expected: self.n_params(), got: params.len() });
        }
        let mut o = 0;
        for layer in &mut self.layers {
            let n = layer.coefficients.len();
            layer.coefficients.copy_from_slice(&params[o..o + n]);
            o += n;
        }
        Ok(())
    }

    pub fn scale(&self, values: &[f64]) -> Vec<f64> {
        self.scaler.transform(values)
    }

    fn check_record(&self, record: &DesignRecord) -> Result<()> {
        if record.scenario != self.scenario_id {
            return Err(Error::SchemaMismatch(format!(
                "record is `{}`, model is `{}`",
                record.scenario, self.scenario_id
            )));
        }
        if record.values.len() != self.n_inputs() {
            return Err(Error::SchemaMismatch(format!(
                "record has {} values, model expects {}",
                record.values.len(),
                self.n_inputs()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, record: &DesignRecord) -> Result<Forward> {
        self.check_record(record)?;
        self.forward_scaled(&self.scale(&record.values))
    }

    /// Forward pass on already scaled features.
    pub fn forward_scaled(&self, x: &[f64]) -> Result<Forward> {
        let mut acts = vec![x.to_vec()];
        let mut clamped = false;
        for layer in &self.layers {
            let (out, c) = layer.forward(acts.last().unwrap())?;
            clamped |= c;
            acts.push(out);
        }
        let logit = acts.last().unwrap()[0];
        if !logit.is_finite() {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(Forward { prob: sigmoid(logit), logit, activations: acts, clamped })
    }

    pub fn predict_proba(&self, record: &DesignRecord) -> Result<f64> {
        self.forward(record).map(|f| f.prob)
    }

    pub fn classify(&self, record: &DesignRecord) -> Result<u8> {
        self.predict_proba(record).map(|p| classify(p, self.threshold_tau))
    }

    /// Probability for a scaled input without allocating activations per layer
    /// beyond two buffers. Non-finite inputs yield NaN.
    pub fn predict_scaled(&self, x: &[f64]) -> f64 {
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            next.clear();
            next.resize(layer.d_out, 0.0);
            for (i, &xi) in cur.iter().enumerate() {
                let (xc, _) = layer.knots.clamp(xi);
                let local = layer.knots.local(xc);
                for (j, o) in next.iter_mut().enumerate() {
                    *o += eval_local(&local, layer.edge_coefficients(i, j));
                }
            }
            std::mem::swap(&mut cur, &mut next);
        }
        sigmoid(cur[0])
    }

    pub fn predict_batch_scaled(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.par_iter().map(|x| self.predict_scaled(x)).collect()
    }

    /// Scales and predicts every record; records must match the model.
    pub fn predict_records(&self, records: &[DesignRecord]) -> Result<Vec<f64>> {
        for r in records {
            self.check_record(r)?;
        }
        Ok(records.par_iter().map(|r| self.predict_scaled(&self.scale(&r.values))).collect())
    }

    /// The two penultimate activations.
    pub fn latent(&self, record: &DesignRecord) -> Result<(f64, f64)> {
        self.check_record(record)?;
        self.latent_scaled(&self.scale(&record.values))
    }

    pub fn latent_scaled(&self, x: &[f64]) -> Result<(f64, f64)> {
        let last = self.layers.last().unwrap();
        if self.layers.len() < 2 || last.d_in != 2 {
            return Err(Error::ArchitectureMismatch(format!(
                "latent projection needs a final hidden width of 2, model widths are {:?}",
                self.widths()
            )));
        }
        let f = self.forward_scaled(x)?;
        let z = &f.activations[self.layers.len() - 1];
        Ok((z[0], z[1]))
    }

    /// Mean squared coefficient.
    pub fn regularizer(&self) -> f64 {
        let n = self.n_params() as f64;
        self.layers.iter().flat_map(|l| &l.coefficients).map(|c| c * c).sum::<f64>() / n
    }

    fn workspace(&self) -> Workspace {
        Workspace {
            acts: self.widths().iter().map(|&w| vec![0.0; w]).collect(),
            locals: self
                .layers
                .iter()
                .map(|l| vec![l.knots.local(l.knots.domain().0); l.d_in])
                .collect(),
            clamped: self.layers.iter().map(|l| vec![false; l.d_in]).collect(),
            delta: Vec::new(),
            delta_next: Vec::new(),
        }
    }

    /// Forward pass keeping per-edge basis caches. Returns the logit.
    fn forward_cached(&self, x: &[f64], ws: &mut Workspace) -> f64 {
        ws.acts[0].copy_from_slice(x);
        for (l, layer) in self.layers.iter().enumerate() {
            let (head, tail) = ws.acts.split_at_mut(l + 1);
            let input = &head[l];
            let out = &mut tail[0];
            out.iter_mut().for_each(|o| *o = 0.0);
            for (i, &xi) in input.iter().enumerate() {
                let (xc, c) = layer.knots.clamp(xi);
                let local = layer.knots.local(xc);
                ws.locals[l][i] = local;
                ws.clamped[l][i] = c;
                for (j, o) in out.iter_mut().enumerate() {
                    *o += eval_local(&local, layer.edge_coefficients(i, j));
                }
            }
        }
        ws.acts.last().unwrap()[0]
    }

    /// Adds `d_logit * d logit / d coefficients` into `grad`.
    fn backward_cached(&self, d_logit: f64, grad: &mut [f64], offsets: &[usize], ws: &mut Workspace) {
        ws.delta.clear();
        ws.delta.push(d_logit);
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let m = layer.n_basis();
            let g = &mut grad[offsets[l]..offsets[l] + layer.coefficients.len()];
            let need_input_delta = l > 0;
            ws.delta_next.clear();
            ws.delta_next.resize(layer.d_in, 0.0);
            for i in 0..layer.d_in {
                let local = &ws.locals[l][i];
                let slope_on = need_input_delta && !ws.clamped[l][i];
                let mut acc = 0.0;
                for (j, &dj) in ws.delta.iter().enumerate() {
                    if dj == 0.0 {
                        continue;
                    }
                    let o = layer.offset(i, j);
                    let c = &layer.coefficients[o..o + m];
                    let mut slope = 0.0;
                    for (b, v, d) in local.iter(m) {
                        g[o + b] += dj * v;
                        slope += c[b] * d;
                    }
                    if slope_on {
                        acc += dj * slope;
                    }
                }
                ws.delta_next[i] = acc;
            }
            std::mem::swap(&mut ws.delta, &mut ws.delta_next);
        }
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut o = 0;
        self.layers
            .iter()
            .map(|l| {
                let start = o;
                o += l.coefficients.len();
                start
            })
            .collect()
    }

    fn check_batch(&self, xs: &[Vec<f64>], ys: &[u8]) -> Result<()> {
        if xs.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if xs.len() != ys.len() {
            return Err(Error::LengthMismatch(xs.len(), ys.len()));
        }
        let d = self.n_inputs();
        for x in xs {
            if x.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: x.len() });
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("batch input".into()));
            }
        }
        Ok(())
    }

    /// Regularized BCE on scaled inputs.
    pub fn loss(&self, xs: &[Vec<f64>], ys: &[u8], lambda: f64) -> Result<f64> {
        self.check_batch(xs, ys)?;
        let partial: Vec<f64> = xs
            .par_chunks(CHUNK)
            .zip(ys.par_chunks(CHUNK))
            .map(|(xc, yc)| {
                xc.iter()
                    .zip(yc)
                    .map(|(x, &y)| bce_term(self.predict_scaled(x), y))
                    .sum::<f64>()
            })
            .collect();
        let total = partial.iter().sum::<f64>() / xs.len() as f64 + lambda * self.regularizer();
        if !total.is_finite() {
            return Err(Error::Divergence("non-finite loss".into()));
        }
        Ok(total)
    }

    /// Regularized BCE and its exact gradient on scaled inputs.
    pub fn loss_and_grad(&self, xs: &[Vec<f64>], ys: &[u8], lambda: f64) -> Result<(f64, GradientSet)> {
        self.check_batch(xs, ys)?;
        let n = xs.len() as f64;
        let offsets = self.layer_offsets();
        let p = self.n_params();
        let partial: Vec<(f64, Vec<f64>)> = xs
            .par_chunks(CHUNK)
            .zip(ys.par_chunks(CHUNK))
            .map(|(xc, yc)| {
                let mut ws = self.workspace();
                let mut grad = vec![0.0; p];
                let mut loss = 0.0;
                for (x, &y) in xc.iter().zip(yc) {
                    let z = self.forward_cached(x, &mut ws);
                    let prob = sigmoid(z);
                    loss += bce_term(prob, y);
                    // the clip has zero slope outside [eps, 1 - eps]
                    if prob > PROB_EPS && prob < 1.0 - PROB_EPS {
                        let d = (prob - f64::from(y)) / n;
                        self.backward_cached(d, &mut grad, &offsets, &mut ws);
                    }
                }
                (loss, grad)
            })
            .collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; p];
        for (l, g) in &partial {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        loss = loss / n + lambda * self.regularizer();
        let scale = 2.0 * lambda / p as f64;
        for (g, c) in grad.iter_mut().zip(self.layers.iter().flat_map(|l| &l.coefficients)) {
            *g += scale * c;
        }
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Divergence("non-finite loss or gradient".into()));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate() {
            layers.push(grad[offsets[l]..offsets[l] + layer.coefficients.len()].to_vec());
        }
        Ok((loss, GradientSet { layers }))
    }

    pub fn to_json(&self) -> Result<String> {
        let body = self.body();
        let checksum = sha256_hex(serde_json::to_string(&body)?.as_bytes());
        Ok(serde_json::to_string_pretty(&ModelFile { body, checksum })? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::MalformedFile(e.to_string()))?;
        let found = value
            .get("format_version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| Error::MalformedFile("missing format_version".into()))?;
        if found != u64::from(FORMAT_VERSION) {
            return Err(Error::VersionMismatch { found: found as u32, expected: FORMAT_VERSION });
        }
        let file: ModelFile =
            serde_json::from_value(value).map_err(|e| Error::MalformedFile(e.to_string()))?;
        let model = Self::from_body(&file.body)?;
        let computed = sha256_hex(serde_json::to_string(&file.body)?.as_bytes());
        if computed != file.checksum {
            return Err(Error::ChecksumFailure { stored: file.checksum, computed });
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    fn body(&self) -> ModelBody {
        ModelBody {
            format_version: FORMAT_VERSION,
            scenario_id: self.scenario_id,
            feature_names: self.feature_names.clone(),
            scaler: self.scaler.clone(),
            spline: self.spline,
            layers: self
                .layers
                .iter()
                .map(|l| {
                    let (lo, hi) = l.knots.domain();
                    LayerFile { d_in: l.d_in, d_out: l.d_out, domain: [lo, hi], coefficients: l.coefficients.clone() }
                })
                .collect(),
            threshold_tau: self.threshold_tau,
        }
    }

    fn from_body(body: &ModelBody) -> Result<Self> {
        if body.layers.is_empty() {
            return Err(Error::MalformedFile("model has no layers".into()));
        }
        if body.feature_names.len() != body.layers[0].d_in {
            return Err(Error::SchemaMismatch(format!(
                "{} feature names but first layer width {}",
                body.feature_names.len(),
                body.layers[0].d_in
            )));
        }
        if body.scaler.len() != body.feature_names.len() || body.scaler.maxs.len() != body.scaler.mins.len() {
            return Err(Error::SchemaMismatch("scaler length differs from feature count".into()));
        }
        if !(body.threshold_tau > 0.0 && body.threshold_tau < 1.0) {
            return Err(Error::MalformedFile(format!("threshold {} not in (0, 1)", body.threshold_tau)));
        }
        let mut layers = Vec::with_capacity(body.layers.len());
        for (l, lf) in body.layers.iter().enumerate() {
            if l > 0 && lf.d_in != body.layers[l - 1].d_out {
                return Err(Error::ArchitectureMismatch(format!("layer {l} input width does not chain")));
            }
            let knots = KnotVector::uniform(body.spline.grid, body.spline.k, lf.domain[0], lf.domain[1])?;
            layers.push(KanLayer::from_coefficients(lf.d_in, lf.d_out, knots, lf.coefficients.clone())?);
        }
        if layers.last().unwrap().d_out != 1 {
            return Err(Error::ArchitectureMismatch("final layer must have one output".into()));
        }
        Ok(KanModel {
            scenario_id: body.scenario_id,
            feature_names: body.feature_names.clone(),
            scaler: body.scaler.clone(),
            threshold_tau: body.threshold_tau,
            spline: body.spline,
            layers,
        })
    }
}

/// Regularized BCE on scaled inputs.
pub fn bce_loss(model: &KanModel, xs: &[Vec<f64>], ys: &[u8], lambda: f64) -> Result<f64> {
    model.loss(xs, ys, lambda)
}

/// Exact coefficient gradient of [`bce_loss`].
pub fn backward(model: &KanModel, xs: &[Vec<f64>], ys: &[u8], lambda: f64) -> Result<GradientSet> {
    model.loss_and_grad(xs, ys, lambda).map(|(_, g)| g)
}

#[derive(Serialize, Deserialize)]
struct LayerFile {
    d_in: usize,
    d_out: usize,
    domain: [f64; 2],
    coefficients: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ModelBody {
    format_version: u32,
    scenario_id: ScenarioId,
    feature_names: Vec<String>,
    scaler: Scaler,
    spline: SplineConfig,
    layers: Vec<LayerFile>,
    threshold_tau: f64,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    #[serde(flatten)]
    body: ModelBody,
    checksum: String,
}
