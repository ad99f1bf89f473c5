//! Training loop for [`KanModel`]: Adam and L-BFGS optimizers, early
//! stopping on validation loss, plateau learning-rate schedule, learning
//! curves and k-fold grid search.

use std::collections::VecDeque;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kan::KanModel;
use crate::metrics::{self, MetricsReport};
use crate::prep::{self, Scaler};
use crate::rules::sha256_hex;
use crate::schema::{DesignRecord, ScenarioId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    Lbfgs,
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "adam" => Ok(OptimizerKind::Adam),
            "lbfgs" => Ok(OptimizerKind::Lbfgs),
            other => Err(Error::InvalidArgument(format!("unknown optimizer `{other}`"))),
        }
    }
}

impl std::fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OptimizerKind::Adam => "adam",
            OptimizerKind::Lbfgs => "lbfgs",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub grid: usize,
    pub order_k: usize,
    pub optimizer: OptimizerKind,
    pub max_steps: usize,
    pub patience: usize,
    /// Adam step size, or the initial line-search step for L-BFGS.
    pub lr: f64,
    pub lr_factor: f64,
    pub lr_patience: usize,
    pub lr_min: f64,
    pub lambda: f64,
    pub seed: u64,
    pub batch_size: usize,
    pub test_fraction: f64,
    pub val_fraction: f64,
    pub lbfgs_history: usize,
    /// L-BFGS iterations per training step.
    pub lbfgs_max_iter: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: vec![16, 2],
            grid: 3,
            order_k: 3,
            optimizer: OptimizerKind::Lbfgs,
            max_steps: 500,
            patience: 20,
            lr: 1.0,
            lr_factor: 0.5,
            lr_patience: 3,
            lr_min: 1e-6,
            lambda: 1e-4,
            seed: 0,
            batch_size: 256,
            test_fraction: 0.2,
            val_fraction: 0.1,
            lbfgs_history: 10,
            lbfgs_max_iter: 20,
        }
    }
}

impl TrainConfig {
    /// Defaults adjusted for mini-batch Adam.
    pub fn adam() -> Self {
        TrainConfig { optimizer: OptimizerKind::Adam, max_steps: 200, lr: 1e-2, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return Err(Error::InvalidArgument("hidden widths must be at least 1".into()));
        }
        if self.grid == 0 || self.order_k == 0 {
            return Err(Error::InvalidArgument("grid and k must be at least 1".into()));
        }
        if !(self.lr_min < self.lr) {
            return Err(Error::InvalidArgument(format!("lr_min {} must be below lr {}", self.lr_min, self.lr)));
        }
        if !(self.lr_factor > 0.0 && self.lr_factor < 1.0) {
            return Err(Error::InvalidArgument("lr_factor must be in (0, 1)".into()));
        }
        if self.lambda < 0.0 {
            return Err(Error::InvalidArgument("lambda must be non-negative".into()));
        }
        if self.batch_size == 0 || self.max_steps == 0 || self.lbfgs_max_iter == 0 {
            return Err(Error::InvalidArgument("batch_size and max_steps must be positive".into()));
        }
        Ok(())
    }

    /// Short label used in grid-search output.
    pub fn label(&self) -> String {
        let arch: Vec<String> = self.hidden.iter().map(|w| w.to_string()).collect();
        format!("[{}]/grid{}/k{}/{}", arch.join(","), self.grid, self.order_k, self.optimizer)
    }
}

// ---------------------------------------------------------------------------
// Optimizers

#[derive(Debug, Clone)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl AdamState {
    pub fn new(n: usize) -> Self {
        AdamState { beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grad.len() || state.m.len() != grad.len() {
        return Err(Error::DimensionMismatch { expected: state.m.len(), got: grad.len() });
    }
    state.t += 1;
    let bc1 = 1.0 - state.beta1.powi(state.t);
    let bc2 = 1.0 - state.beta2.powi(state.t);
    for (((p, &g), m), v) in params.iter_mut().zip(grad).zip(&mut state.m).zip(&mut state.v) {
        *m = state.beta1 * *m + (1.0 - state.beta1) * g;
        *v = state.beta2 * *v + (1.0 - state.beta2) * g * g;
        let update = lr * (*m / bc1) / ((*v / bc2).sqrt() + state.eps);
        if !update.is_finite() {
            return Err(Error::Divergence("non-finite Adam update".into()));
        }
        *p -= update;
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct LbfgsState {
    pub history: usize,
    pub c1: f64,
    pub shrink: f64,
    pub max_trials: usize,
    s: VecDeque<Vec<f64>>,
    y: VecDeque<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LbfgsStepInfo {
    pub loss: f64,
    pub step: f64,
    pub trials: usize,
    /// The quasi-Newton line search failed and a gradient step was tried instead.
    pub fallback: bool,
    /// No step satisfying the sufficient-decrease test was found.
    pub stalled: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LbfgsState {
    pub fn new(history: usize) -> Self {
        LbfgsState { history, c1: 1e-4, shrink: 0.5, max_trials: 25, s: VecDeque::new(), y: VecDeque::new() }
    }

    pub fn pairs(&self) -> usize {
        self.s.len()
    }

    pub fn flush(&mut self) {
        self.s.clear();
        self.y.clear();
    }

    /// Two-loop recursion: returns the search direction `-H g`.
    pub fn direction(&self, g: &[f64]) -> Vec<f64> {
        let k = self.s.len();
        let mut q = g.to_vec();
        let mut alpha = vec![0.0; k];
        let rho: Vec<f64> = (0..k).map(|i| 1.0 / dot(&self.y[i], &self.s[i])).collect();
        for i in (0..k).rev() {
            alpha[i] = rho[i] * dot(&self.s[i], &q);
            for (qj, yj) in q.iter_mut().zip(&self.y[i]) {
                *qj -= alpha[i] * yj;
            }
        }
        let gamma = if k > 0 {
            dot(&self.s[k - 1], &self.y[k - 1]) / dot(&self.y[k - 1], &self.y[k - 1])
        } else {
            1.0
        };
        for v in &mut q {
            *v *= gamma;
        }
        for i in 0..k {
            let beta = rho[i] * dot(&self.y[i], &q);
            for (qj, sj) in q.iter_mut().zip(&self.s[i]) {
                *qj += (alpha[i] - beta) * sj;
            }
        }
        q.iter().map(|v| -v).collect()
    }

    /// Backtracking Armijo search from `t0`. When the first trial is accepted
    /// the step is doubled up to `t_max` while the condition holds and the
    /// loss keeps falling.
    #[allow(clippy::too_many_arguments)]
    fn line_search<F>(
        &self,
        x: &[f64],
        f: f64,
        g: &[f64],
        d: &[f64],
        t0: f64,
        t_max: f64,
        obj: &mut F,
    ) -> Result<Option<(f64, Vec<f64>, f64, Vec<f64>, usize)>>
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let slope = dot(g, d);
        let at = |t: f64| -> Vec<f64> { x.iter().zip(d).map(|(xi, di)| xi + t * di).collect() };
        let mut t = t0;
        for n in 1..=self.max_trials {
            let trial = at(t);
            // a diverging trial point counts as a failed trial
            if let Ok((ft, gt)) = obj(&trial) {
                if ft.is_finite() && ft <= f + self.c1 * t * slope {
                    let mut best = (t, trial, ft, gt, n);
                    let mut trials = n;
                    if n == 1 {
                        while best.0 < t_max && trials < self.max_trials {
                            let t2 = (2.0 * best.0).min(t_max);
                            trials += 1;
                            let trial = at(t2);
                            match obj(&trial) {
                                Ok((f2, g2)) if f2.is_finite() && f2 <= f + self.c1 * t2 * slope && f2 < best.2 => {
                                    best = (t2, trial, f2, g2, trials);
                                }
                                _ => break,
                            }
                        }
                        best.4 = trials;
                    }
                    return Ok(Some(best));
                }
            }
            t *= self.shrink;
        }
        Ok(None)
    }

    /// One L-BFGS iteration from `x` with loss `f` and gradient `g`. On return
    /// `x`, `f` and `g` hold the new point.
    pub fn step<F>(&mut self, x: &mut Vec<f64>, f: &mut f64, g: &mut Vec<f64>, lr: f64, obj: &mut F) -> Result<LbfgsStepInfo>
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let mut d = self.direction(g);
        if dot(&d, g) >= 0.0 {
            self.flush();
            d = g.iter().map(|v| -v).collect();
        }
        let g1: f64 = g.iter().map(|v| v.abs()).sum();
        let sd_step = (1.0 / g1.max(f64::MIN_POSITIVE)).min(1.0);
        let base = if self.s.is_empty() { sd_step } else { 1.0 };
        let mut fallback = false;
        let mut found = self.line_search(x, *f, g, &d, lr * base, base.max(lr * base), obj)?;
        let mut trials = found.as_ref().map_or(self.max_trials, |r| r.4);
        if found.is_none() {
            self.flush();
            fallback = true;
            let sd: Vec<f64> = g.iter().map(|v| -v).collect();
            found = self.line_search(x, *f, g, &sd, lr * sd_step, sd_step.max(lr * sd_step), obj)?;
            trials += found.as_ref().map_or(self.max_trials, |r| r.4);
        }
        let Some((t, x_new, f_new, g_new, _)) = found else {
            return Ok(LbfgsStepInfo { loss: *f, step: 0.0, trials, fallback, stalled: true });
        };
        let s: Vec<f64> = x_new.iter().zip(x.iter()).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(g.iter()).map(|(a, b)| a - b).collect();
        if dot(&s, &y) > 0.0 {
            self.s.push_back(s);
            self.y.push_back(y);
            if self.s.len() > self.history {
                self.s.pop_front();
                self.y.pop_front();
            }
        }
        *x = x_new;
        *f = f_new;
        *g = g_new;
        Ok(LbfgsStepInfo { loss: f_new, step: t, trials, fallback, stalled: false })
    }
}

/// Functional form of [`LbfgsState::step`].
pub fn lbfgs_step<F>(x: &mut Vec<f64>, f: &mut f64, g: &mut Vec<f64>, state: &mut LbfgsState, lr: f64, obj: &mut F) -> Result<LbfgsStepInfo>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    state.step(x, f, g, lr, obj)
}

// ---------------------------------------------------------------------------
// Schedules

/// Early stopping plus reduce-on-plateau, driven by validation loss.
#[derive(Debug, Clone)]
pub struct PlateauMonitor {
    pub patience: usize,
    pub lr_patience: usize,
    pub lr_factor: f64,
    pub lr_min: f64,
    pub lr: f64,
    pub best: f64,
    pub best_step: usize,
    since_best: usize,
    stagnant: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub improved: bool,
    pub lr_reduced: bool,
    pub stop: bool,
}

impl PlateauMonitor {
    pub fn new(config: &TrainConfig) -> Self {
        PlateauMonitor {
            patience: config.patience,
            lr_patience: config.lr_patience,
            lr_factor: config.lr_factor,
            lr_min: config.lr_min,
            lr: config.lr,
            best: f64::INFINITY,
            best_step: 0,
            since_best: 0,
            stagnant: 0,
        }
    }

    pub fn observe(&mut self, step: usize, val_loss: f64) -> Observation {
        let mut obs = Observation { improved: false, lr_reduced: false, stop: false };
        if val_loss < self.best {
            self.best = val_loss;
            self.best_step = step;
            self.since_best = 0;
            self.stagnant = 0;
            obs.improved = true;
            return obs;
        }
        self.since_best += 1;
        self.stagnant += 1;
        if self.stagnant >= self.lr_patience {
            let next = (self.lr * self.lr_factor).max(self.lr_min);
            obs.lr_reduced = next < self.lr;
            self.lr = next;
            self.stagnant = 0;
        }
        obs.stop = self.since_best >= self.patience;
        obs
    }
}

// ---------------------------------------------------------------------------
// Traces

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStop,
    MaxSteps,
    Divergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub split: String,
    pub loss: f64,
    pub auc: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub rows: Vec<TraceRow>,
    pub stop_reason: StopReason,
    pub best_step: usize,
    pub steps: usize,
}

impl TrainTrace {
    pub fn split_rows<'a>(&'a self, split: &'a str) -> impl Iterator<Item = &'a TraceRow> + 'a {
        self.rows.iter().filter(move |r| r.split == split)
    }

    pub fn val_losses(&self) -> Vec<f64> {
        self.split_rows("valid").map(|r| r.loss).collect()
    }

    /// Learning rate in effect at each step.
    pub fn lrs(&self) -> Vec<f64> {
        self.split_rows("valid").map(|r| r.lr).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        }
        out.flush()?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Data plumbing

pub fn labels_of(records: &[DesignRecord]) -> Result<Vec<u8>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| match r.label {
            Some(y @ (0 | 1)) => Ok(y),
            Some(y) => Err(Error::InvalidArgument(format!("record {i} has label {y}"))),
            None => Err(Error::InvalidArgument(format!("record {i} is unlabeled"))),
        })
        .collect()
}

fn scenario_of(records: &[DesignRecord]) -> Result<ScenarioId> {
    let first = records.first().ok_or_else(|| Error::TooFewRecords("no records".into()))?;
    if let Some(r) = records.iter().find(|r| r.scenario != first.scenario) {
        return Err(Error::SchemaMismatch(format!("mixed scenarios `{}` and `{}`", first.scenario, r.scenario)));
    }
    Ok(first.scenario)
}

fn check_both_classes(ys: &[u8]) -> Result<()> {
    let pos = ys.iter().filter(|&&y| y == 1).count();
    if pos == 0 || pos == ys.len() {
        return Err(Error::SingleClass);
    }
    Ok(())
}

/// Scaled design matrix plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<u8>,
}

impl Matrix {
    pub fn from_records(records: &[&DesignRecord], scaler: &Scaler) -> Result<Self> {
        let xs = records.iter().map(|r| scaler.transform(&r.values)).collect();
        let ys = records
            .iter()
            .map(|r| r.label.ok_or_else(|| Error::InvalidArgument("unlabeled record".into())))
            .collect::<Result<_>>()?;
        Ok(Matrix { xs, ys })
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    fn subset(&self, idx: &[usize]) -> Matrix {
        Matrix { xs: idx.iter().map(|&i| self.xs[i].clone()).collect(), ys: idx.iter().map(|&i| self.ys[i]).collect() }
    }

    /// Content hash; identical inputs give identical hashes.
    pub fn hash(&self) -> String {
        let mut bytes = Vec::with_capacity(self.len() * (self.xs.first().map_or(0, |x| x.len()) * 8 + 1));
        for (x, &y) in self.xs.iter().zip(&self.ys) {
            for v in x {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            bytes.push(y);
        }
        sha256_hex(&bytes)
    }
}

/// The partitions used by one training run, already scaled.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub scenario: ScenarioId,
    pub feature_names: Vec<String>,
    pub scaler: Scaler,
    /// Records the optimizer fits.
    pub fit: Matrix,
    /// Held out from fitting for early stopping.
    pub valid: Matrix,
    pub test: Option<Matrix>,
}

impl PreparedData {
    /// Fits the scaler on `train` and carves a seeded validation share from it.
    pub fn new(train: &[&DesignRecord], test: Option<&[&DesignRecord]>, config: &TrainConfig) -> Result<Self> {
        let owned: Vec<DesignRecord> = train.iter().map(|&r| r.clone()).collect();
        let scenario = scenario_of(&owned)?;
        let ys = labels_of(&owned)?;
        check_both_classes(&ys)?;
        let schema = crate::schema::ScenarioSchema::for_scenario(scenario);
        let feature_names = schema.names();
        for r in train {
            r.check_schema(&schema)?;
        }
        let rows: Vec<&[f64]> = train.iter().map(|r| r.values.as_slice()).collect();
        let scaler = Scaler::fit(&rows, &feature_names)?;
        let (fit_idx, val_idx) = prep::split(&ys, 1.0 - config.val_fraction, config.seed.wrapping_add(1))?;
        let all = Matrix::from_records(train, &scaler)?;
        let test = match test {
            Some(t) => {
                for r in t {
                    r.check_schema(&schema)?;
                }
                Some(Matrix::from_records(t, &scaler)?)
            }
            None => None,
        };
        Ok(PreparedData { scenario, feature_names, scaler, fit: all.subset(&fit_idx), valid: all.subset(&val_idx), test })
    }
}

fn trace_row(step: usize, split: &str, lr: f64, probs: &[f64], ys: &[u8]) -> Result<TraceRow> {
    let loss = metrics::log_loss(probs, ys)?;
    let (auc, cm) = match metrics::roc_auc(probs, ys) {
        Ok(a) => {
            let preds: Vec<u8> = probs.iter().map(|&p| u8::from(p >= 0.5)).collect();
            (a, metrics::classification_metrics(&preds, ys)?)
        }
        Err(Error::SingleClass) => {
            let preds: Vec<u8> = probs.iter().map(|&p| u8::from(p >= 0.5)).collect();
            (f64::NAN, metrics::classification_metrics(&preds, ys)?)
        }
        Err(e) => return Err(e),
    };
    Ok(TraceRow {
        step,
        split: split.to_string(),
        loss,
        auc,
        f1: cm.f1,
        accuracy: cm.accuracy,
        precision: cm.precision,
        recall: cm.recall,
        lr,
    })
}

/// Fits a model on prepared data. Returns the best-validation model.
pub fn fit(data: &PreparedData, config: &TrainConfig) -> Result<(KanModel, TrainTrace)> {
    config.validate()?;
    if data.fit.is_empty() || data.valid.is_empty() {
        return Err(Error::TooFewRecords("fit and validation partitions must be non-empty".into()));
    }
    let mut model = KanModel::init(
        data.scenario,
        data.feature_names.clone(),
        data.scaler.clone(),
        &config.hidden,
        config.grid,
        config.order_k,
        config.seed,
    )?;
    let mut monitor = PlateauMonitor::new(config);
    let mut rows = Vec::new();
    let mut best_params = model.params();

    let record = |model: &KanModel, step: usize, lr: f64, rows: &mut Vec<TraceRow>| -> Result<f64> {
        let p_fit = model.predict_batch_scaled(&data.fit.xs);
        rows.push(trace_row(step, "train", lr, &p_fit, &data.fit.ys)?);
        let p_val = model.predict_batch_scaled(&data.valid.xs);
        let val = trace_row(step, "valid", lr, &p_val, &data.valid.ys)?;
        let val_loss = val.loss;
        rows.push(val);
        if let Some(t) = &data.test {
            let p_test = model.predict_batch_scaled(&t.xs);
            rows.push(trace_row(step, "test", lr, &p_test, &t.ys)?);
        }
        Ok(val_loss)
    };

    let v0 = record(&model, 0, monitor.lr, &mut rows)?;
    monitor.observe(0, v0);

    let mut params = model.params();
    let mut adam = AdamState::new(params.len());
    let mut lbfgs = LbfgsState::new(config.lbfgs_history);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(2));
    let mut order: Vec<usize> = (0..data.fit.len()).collect();
    let mut f_cur = f64::NAN;
    let mut g_cur = Vec::new();
    let mut stop_reason = StopReason::MaxSteps;
    let mut steps = 0;

    for step in 1..=config.max_steps {
        let lr = monitor.lr;
        let outcome: Result<()> = (|| {
            match config.optimizer {
                OptimizerKind::Adam => {
                    order.shuffle(&mut rng);
                    for chunk in order.chunks(config.batch_size) {
                        let xs: Vec<Vec<f64>> = chunk.iter().map(|&i| data.fit.xs[i].clone()).collect();
                        let ys: Vec<u8> = chunk.iter().map(|&i| data.fit.ys[i]).collect();
                        model.set_params(&params)?;
                        let (_, g) = model.loss_and_grad(&xs, &ys, config.lambda)?;
                        adam_step(&mut params, &g.flat(), &mut adam, lr)?;
                    }
                }
                OptimizerKind::Lbfgs => {
                    let mut scratch = model.clone();
                    let mut obj = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
                        scratch.set_params(p)?;
                        let (l, g) = scratch.loss_and_grad(&data.fit.xs, &data.fit.ys, config.lambda)?;
                        Ok((l, g.flat()))
                    };
                    if g_cur.is_empty() {
                        let (l, g) = obj(&params)?;
                        f_cur = l;
                        g_cur = g;
                    }
                    for _ in 0..config.lbfgs_max_iter {
                        if lbfgs.step(&mut params, &mut f_cur, &mut g_cur, lr, &mut obj)?.stalled {
                            break;
                        }
                    }
                }
            }
            model.set_params(&params)
        })();
        if let Err(e) = outcome {
            match e {
                Error::Divergence(_) | Error::NonFinite(_) => {
                    stop_reason = StopReason::Divergence;
                    break;
                }
                other => return Err(other),
            }
        }
        steps = step;
        let val_loss = record(&model, step, lr, &mut rows)?;
        if !val_loss.is_finite() {
            stop_reason = StopReason::Divergence;
            break;
        }
        let obs = monitor.observe(step, val_loss);
        if obs.improved {
            best_params.clone_from(&params);
        }
        if obs.stop {
            stop_reason = StopReason::EarlyStop;
            break;
        }
    }
    model.set_params(&best_params)?;
    let trace = TrainTrace { rows, stop_reason, best_step: monitor.best_step, steps };
    Ok((model, trace))
}

/// Everything a full training run produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: KanModel,
    pub trace: TrainTrace,
    /// Held-out metrics of the restored best model.
    pub test_report: Option<MetricsReport>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

/// Trains on `train` and reports on `test` when given.
pub fn train_split(train: &[&DesignRecord], test: Option<&[&DesignRecord]>, config: &TrainConfig) -> Result<(KanModel, TrainTrace, Option<MetricsReport>)> {
    let data = PreparedData::new(train, test, config)?;
    let (model, trace) = fit(&data, config)?;
    let report = match &data.test {
        Some(t) => Some(metrics::evaluate(&model.predict_batch_scaled(&t.xs), &t.ys, model.threshold_tau)?),
        None => None,
    };
    Ok((model, trace, report))
}

/// Seeded stratified train/test split, then [`train_split`].
pub fn train(records: &[DesignRecord], config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    let ys = labels_of(records)?;
    check_both_classes(&ys)?;
    let (train_idx, test_idx) = prep::split(&ys, 1.0 - config.test_fraction, config.seed)?;
    let tr: Vec<&DesignRecord> = train_idx.iter().map(|&i| &records[i]).collect();
    let te: Vec<&DesignRecord> = test_idx.iter().map(|&i| &records[i]).collect();
    let (model, trace, test_report) = train_split(&tr, Some(&te), config)?;
    Ok(TrainOutcome { model, trace, test_report, train_indices: train_idx, test_indices: test_idx })
}

/// Model predictions for labeled records, plus the full metrics report.
pub fn evaluate_model(model: &KanModel, records: &[DesignRecord]) -> Result<MetricsReport> {
    let ys = labels_of(records)?;
    let probs = model.predict_records(records)?;
    metrics::evaluate(&probs, &ys, model.threshold_tau)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    pub report: MetricsReport,
    pub test_hash: String,
    pub seconds: f64,
}

/// Trains on growing prefixes of one shuffled training pool and evaluates
/// every run on the same held-out test partition.
pub fn learning_curve(records: &[DesignRecord], sizes: &[usize], config: &TrainConfig) -> Result<Vec<CurvePoint>> {
    config.validate()?;
    let ys = labels_of(records)?;
    check_both_classes(&ys)?;
    let (train_idx, test_idx) = prep::split(&ys, 1.0 - config.test_fraction, config.seed)?;
    if let Some(&too_big) = sizes.iter().find(|&&s| s > train_idx.len()) {
        return Err(Error::SizeExceedsData { requested: too_big, available: train_idx.len() });
    }
    let te: Vec<&DesignRecord> = test_idx.iter().map(|&i| &records[i]).collect();
    let mut out = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let start = std::time::Instant::now();
        let tr: Vec<&DesignRecord> = train_idx[..size].iter().map(|&i| &records[i]).collect();
        let data = PreparedData::new(&tr, Some(&te), config)?;
        let (model, _) = fit(&data, config)?;
        let test = data.test.as_ref().unwrap();
        let report = metrics::evaluate(&model.predict_batch_scaled(&test.xs), &test.ys, model.threshold_tau)?;
        let idx_bytes: Vec<u8> = test_idx.iter().flat_map(|i| (*i as u64).to_le_bytes()).collect();
        out.push(CurvePoint { size, report, test_hash: sha256_hex(&idx_bytes), seconds: start.elapsed().as_secs_f64() });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub archs: Vec<Vec<usize>>,
    pub grids: Vec<usize>,
    pub ks: Vec<usize>,
    pub optimizers: Vec<OptimizerKind>,
}

impl SearchSpace {
    /// Every configuration, in arch, grid, k, optimizer order.
    pub fn configs(&self, base: &TrainConfig) -> Vec<TrainConfig> {
        let mut out = Vec::new();
        for arch in &self.archs {
            for &grid in &self.grids {
                for &k in &self.ks {
                    for &opt in &self.optimizers {
                        let mut c = base.clone();
                        c.hidden = arch.clone();
                        c.grid = grid;
                        c.order_k = k;
                        if opt != base.optimizer {
                            let d = if opt == OptimizerKind::Adam { TrainConfig::adam() } else { TrainConfig::default() };
                            c.lr = d.lr;
                            c.max_steps = d.max_steps;
                        }
                        c.optimizer = opt;
                        out.push(c);
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub rank: usize,
    pub config: TrainConfig,
    pub mean_auc: f64,
    pub mean_f1: f64,
    pub fold_aucs: Vec<f64>,
}

/// Scores every configuration by mean k-fold validation AUC and ranks them;
/// ties go to higher mean F1, then to enumeration order.
pub fn grid_search(records: &[DesignRecord], space: &SearchSpace, k_folds: usize, seed: u64, base: &TrainConfig) -> Result<Vec<GridResult>> {
    let mut base = base.clone();
    base.seed = seed;
    let configs = space.configs(&base);
    if configs.is_empty() {
        return Err(Error::EmptySearchSpace);
    }
    let ys = labels_of(records)?;
    let folds = prep::kfold(&ys, k_folds, seed)?;
    let jobs: Vec<(usize, usize)> = (0..configs.len()).flat_map(|c| (0..folds.len()).map(move |f| (c, f))).collect();
    let scores: Vec<Result<(f64, f64)>> = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (tr_idx, va_idx) = &folds[f];
            let tr: Vec<&DesignRecord> = tr_idx.iter().map(|&i| &records[i]).collect();
            let va: Vec<&DesignRecord> = va_idx.iter().map(|&i| &records[i]).collect();
            let (_, _, report) = train_split(&tr, Some(&va), &configs[c])?;
            let r = report.expect("validation fold given");
            Ok((r.auc, r.f1))
        })
        .collect();
    let mut results = Vec::with_capacity(configs.len());
    for (c, config) in configs.into_iter().enumerate() {
        let mut aucs = Vec::with_capacity(folds.len());
        let mut f1s = 0.0;
        for f in 0..folds.len() {
            let (a, f1) = scores[c * folds.len() + f].as_ref().map_err(|e| Error::InvalidArgument(e.to_string()))?;
            aucs.push(*a);
            f1s += f1;
        }
        let n = folds.len() as f64;
        results.push(GridResult { rank: 0, config, mean_auc: aucs.iter().sum::<f64>() / n, mean_f1: f1s / n, fold_aucs: aucs });
    }
    // stable sort keeps enumeration order for full ties
    results.sort_by(|a, b| b.mean_auc.total_cmp(&a.mean_auc).then(b.mean_f1.total_cmp(&a.mean_f1)));
    for (i, r) in results.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_zero_gradient_and_first_step() {
        let mut p = vec![1.0, -2.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut st, 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);

        let mut p = vec![0.0];
        let mut st = AdamState::new(1);
        adam_step(&mut p, &[3.7], &mut st, 0.01).unwrap();
        assert!((p[0] + 0.01).abs() < 1e-8);
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = vec![0.0];
        let mut st = AdamState::new(1);
        for _ in 0..5000 {
            let g = 2.0 * (p[0] - 3.0);
            adam_step(&mut p, &[g], &mut st, 0.01).unwrap();
        }
        assert!((p[0] - 3.0).abs() < 1e-6, "{}", p[0]);
    }

    fn quadratic() -> (Vec<Vec<f64>>, Vec<f64>) {
        // SPD matrix A = B^T B + I and vector b
        let b_rows = [
            [1.0, 2.0, 0.0, -1.0, 0.5],
            [0.0, 1.0, 3.0, 0.0, -2.0],
            [2.0, 0.0, 1.0, 1.0, 0.0],
            [-1.0, 1.0, 0.0, 2.0, 1.0],
            [0.5, 0.0, -1.0, 0.0, 3.0],
        ];
        let mut a = vec![vec![0.0; 5]; 5];
        for i in 0..5 {
            for j in 0..5 {
                a[i][j] = (0..5).map(|r| b_rows[r][i] * b_rows[r][j]).sum::<f64>() + if i == j { 1.0 } else { 0.0 };
            }
        }
        (a, vec![1.0, -2.0, 3.0, 0.5, -1.0])
    }

    fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let piv = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            b.swap(c, piv);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            x[r] = (b[r] - (r + 1..n).map(|k| a[r][k] * x[k]).sum::<f64>()) / a[r][r];
        }
        x
    }

    #[test]
    fn lbfgs_solves_quadratic() {
        let (a, b) = quadratic();
        let want = solve(a.clone(), b.clone());
        let mut obj = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let ax: Vec<f64> = a.iter().map(|row| dot(row, x)).collect();
            Ok((0.5 * dot(x, &ax) - dot(&b, x), ax.iter().zip(&b).map(|(p, q)| p - q).collect()))
        };
        let mut x = vec![0.0; 5];
        let (mut f, mut g) = obj(&x).unwrap();
        let mut st = LbfgsState::new(10);
        for _ in 0..50 {
            if g.iter().all(|v| v.abs() < 1e-13) {
                break;
            }
            st.step(&mut x, &mut f, &mut g, 1.0, &mut obj).unwrap();
        }
        for (xi, wi) in x.iter().zip(&want) {
            assert!((xi - wi).abs() < 1e-8, "{x:?} vs {want:?}");
        }
    }

    #[test]
    fn lbfgs_first_direction_is_steepest_descent() {
        let st = LbfgsState::new(10);
        assert_eq!(st.direction(&[1.0, -2.0]), vec![-1.0, 2.0]);
    }

    #[test]
    fn lbfgs_rosenbrock() {
        let mut obj = |x: &[f64]| -> Result<(f64, Vec<f64>)> {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            Ok((f, g))
        };
        let mut x = vec![-1.2, 1.0];
        let (mut f, mut g) = obj(&x).unwrap();
        let mut st = LbfgsState::new(10);
        for _ in 0..200 {
            if f < 1e-12 {
                break;
            }
            st.step(&mut x, &mut f, &mut g, 1.0, &mut obj).unwrap();
        }
        assert!(f < 1e-6, "f = {f}, x = {x:?}");
    }

    #[test]
    fn plateau_monitor_halves_and_stops() {
        let cfg = TrainConfig { lr: 1.0, ..TrainConfig::default() };
        let mut m = PlateauMonitor::new(&cfg);
        assert!(m.observe(0, 1.0).improved);
        let mut lrs = Vec::new();
        let mut stopped_at = None;
        for step in 1..100 {
            let obs = m.observe(step, 1.0);
            lrs.push(m.lr);
            if obs.stop {
                stopped_at = Some(step);
                break;
            }
        }
        assert_eq!(stopped_at, Some(20));
        assert_eq!(&lrs[..7], &[1.0, 1.0, 0.5, 0.5, 0.5, 0.25, 0.25]);
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));

        let cfg = TrainConfig { lr: 1e-5, lr_min: 1e-6, patience: 1000, ..TrainConfig::default() };
        let mut m = PlateauMonitor::new(&cfg);
        m.observe(0, 1.0);
        for s in 1..100 {
            m.observe(s, 2.0);
        }
        assert_eq!(m.lr, 1e-6);
    }

    #[test]
    fn configs_enumerate_product() {
        let space = SearchSpace {
            archs: vec![vec![16, 2], vec![8, 2]],
            grids: vec![3, 5],
            ks: vec![2, 3],
            optimizers: vec![OptimizerKind::Lbfgs],
        };
        let cs = space.configs(&TrainConfig::default());
        assert_eq!(cs.len(), 8);
        assert_eq!(cs[0].label(), "[16,2]/grid3/k2/lbfgs");
        assert_eq!(cs[7].label(), "[8,2]/grid5/k3/lbfgs");
        let empty = SearchSpace { archs: vec![], grids: vec![3], ks: vec![3], optimizers: vec![OptimizerKind::Adam] };
        assert!(empty.configs(&TrainConfig::default()).is_empty());
    }
}
