//! Reference classifiers trained on the same scaled partitions as the KAN:
//! L2-regularised logistic regression and a ReLU multilayer perceptron.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kan::sigmoid;
use crate::metrics::{self, bce_term, MetricsReport};
use crate::schema::DesignRecord;
use crate::trainer::{self, AdamState, LbfgsState, Matrix, PreparedData, TrainConfig};

pub trait Classifier {
    fn predict_proba(&self, x: &[f64]) -> f64;

    fn predict_batch(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.iter().map(|x| self.predict_proba(x)).collect()
    }
}

impl Classifier for crate::kan::KanModel {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        self.predict_scaled(x)
    }

    fn predict_batch(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        self.predict_batch_scaled(xs)
    }
}

fn check_xy(data: &Matrix) -> Result<usize> {
    let d = data.xs.first().ok_or(Error::EmptyBatch)?.len();
    if data.xs.len() != data.ys.len() {
        return Err(Error::LengthMismatch(data.xs.len(), data.ys.len()));
    }
    Ok(d)
}

// ---------------------------------------------------------------------------
// Logistic regression

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrConfig {
    /// Inverse regularisation strength; the penalty is `|w|^2 / (2 C N)` on the mean loss.
    pub c: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for LrConfig {
    fn default() -> Self {
        LrConfig { c: 1.0, max_iter: 1000, tol: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl Classifier for LinearModel {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.bias + x.iter().zip(&self.weights).map(|(a, w)| a * w).sum::<f64>())
    }
}

/// Fits logistic regression with full-batch L-BFGS.
pub fn train_lr(data: &Matrix, config: &LrConfig) -> Result<LinearModel> {
    let d = check_xy(data)?;
    let n = data.len() as f64;
    let pen = 1.0 / (config.c * n);
    let obj = |p: &[f64]| -> Result<(f64, Vec<f64>)> {
        let (w, b) = p.split_at(d);
        let mut g = vec![0.0; d + 1];
        let mut loss = 0.0;
        for (x, &y) in data.xs.iter().zip(&data.ys) {
            let z = b[0] + x.iter().zip(w).map(|(a, w)| a * w).sum::<f64>();
            let prob = sigmoid(z);
            loss += bce_term(prob, y);
            let r = (prob - f64::from(y)) / n;
            for (gj, xj) in g.iter_mut().zip(x) {
                *gj += r * xj;
            }
            g[d] += r;
        }
        loss /= n;
        loss += 0.5 * pen * w.iter().map(|v| v * v).sum::<f64>();
        for (gj, wj) in g.iter_mut().zip(w) {
            *gj += pen * wj;
        }
        Ok((loss, g))
    };
    let mut obj = obj;
    let mut p = vec![0.0; d + 1];
    let (mut f, mut g) = obj(&p)?;
    let mut state = LbfgsState::new(10);
    for _ in 0..config.max_iter {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < config.tol {
            break;
        }
        let info = state.step(&mut p, &mut f, &mut g, 1.0, &mut obj)?;
        if info.stalled {
            break;
        }
    }
    Ok(LinearModel { weights: p[..d].to_vec(), bias: p[d] })
}

// ---------------------------------------------------------------------------
// Multilayer perceptron

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub lr: f64,
    pub batch_size: usize,
    /// L2 penalty on weights, scaled by the batch size.
    pub alpha: f64,
    pub max_epochs: usize,
    /// Epochs without validation-loss improvement before stopping.
    pub patience: usize,
    pub seed: u64,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig { hidden: vec![256, 128, 64], lr: 1e-3, batch_size: 200, alpha: 1e-4, max_epochs: 200, patience: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl MlpModel {
    fn init(widths: &[usize], rng: &mut ChaCha8Rng) -> Self {
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in widths.windows(2) {
            let bound = (6.0 / (w[0] + w[1]) as f64).sqrt();
            weights.push(Array2::from_shape_fn((w[0], w[1]), |_| rng.gen_range(-bound..bound)));
            biases.push(Array1::from_shape_fn(w[1], |_| rng.gen_range(-bound..bound)));
        }
        MlpModel { weights, biases }
    }

    /// Pre-activations and activations of every layer for a batch.
    fn forward(&self, x: ArrayView2<f64>) -> (Vec<Array2<f64>>, Vec<Array2<f64>>) {
        let mut zs = Vec::with_capacity(self.weights.len());
        let mut acts = vec![x.to_owned()];
        let last = self.weights.len() - 1;
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let z = acts[l].dot(w) + b;
            let a = if l == last { z.mapv(sigmoid) } else { z.mapv(|v| v.max(0.0)) };
            zs.push(z);
            acts.push(a);
        }
        (zs, acts)
    }

    pub fn predict_matrix(&self, x: ArrayView2<f64>) -> Vec<f64> {
        let (_, acts) = self.forward(x);
        acts.last().unwrap().column(0).to_vec()
    }
}

impl Classifier for MlpModel {
    fn predict_proba(&self, x: &[f64]) -> f64 {
        let m = Array2::from_shape_vec((1, x.len()), x.to_vec()).expect("row shape");
        self.predict_matrix(m.view())[0]
    }

    fn predict_batch(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        if xs.is_empty() {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(xs.len());
        for chunk in xs.chunks(4096) {
            out.extend(self.predict_matrix(to_array(chunk).view()));
        }
        out
    }
}

fn to_array(xs: &[Vec<f64>]) -> Array2<f64> {
    let d = xs[0].len();
    Array2::from_shape_fn((xs.len(), d), |(i, j)| xs[i][j])
}

fn flat_len(m: &MlpModel) -> usize {
    m.weights.iter().map(|w| w.len()).sum::<usize>() + m.biases.iter().map(|b| b.len()).sum::<usize>()
}

fn flatten(m: &MlpModel) -> Vec<f64> {
    let mut out = Vec::with_capacity(flat_len(m));
    for (w, b) in m.weights.iter().zip(&m.biases) {
        out.extend(w.iter());
        out.extend(b.iter());
    }
    out
}

fn unflatten(m: &mut MlpModel, p: &[f64]) {
    let mut o = 0;
    for (w, b) in m.weights.iter_mut().zip(&mut m.biases) {
        for v in w.iter_mut() {
            *v = p[o];
            o += 1;
        }
        for v in b.iter_mut() {
            *v = p[o];
            o += 1;
        }
    }
}

/// Mean BCE plus `alpha / (2 B) |W|^2` and its gradient for one batch.
fn mlp_grad(m: &MlpModel, x: ArrayView2<f64>, y: &[u8], alpha: f64) -> (f64, Vec<f64>) {
    let bsz = y.len() as f64;
    let (zs, acts) = m.forward(x);
    let p = acts.last().unwrap();
    let mut loss = 0.0;
    let mut delta = Array2::zeros((y.len(), 1));
    for (i, &yi) in y.iter().enumerate() {
        loss += bce_term(p[[i, 0]], yi);
        delta[[i, 0]] = (p[[i, 0]] - f64::from(yi)) / bsz;
    }
    loss /= bsz;
    let mut gw = Vec::with_capacity(m.weights.len());
    let mut gb = Vec::with_capacity(m.weights.len());
    for l in (0..m.weights.len()).rev() {
        let w = &m.weights[l];
        loss += 0.5 * alpha / bsz * w.iter().map(|v| v * v).sum::<f64>();
        let g = acts[l].t().dot(&delta) + &(w * (alpha / bsz));
        gb.push(delta.sum_axis(Axis(0)));
        gw.push(g);
        if l > 0 {
            let mut prev = delta.dot(&w.t());
            prev.zip_mut_with(&zs[l - 1], |d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
            delta = prev;
        }
    }
    gw.reverse();
    gb.reverse();
    let mut flat = Vec::with_capacity(flat_len(m));
    for (w, b) in gw.iter().zip(&gb) {
        flat.extend(w.iter());
        flat.extend(b.iter());
    }
    (loss, flat)
}

/// Mini-batch Adam with early stopping on `valid`; returns the best model.
pub fn train_mlp(fit: &Matrix, valid: &Matrix, config: &MlpConfig) -> Result<MlpModel> {
    let d = check_xy(fit)?;
    check_xy(valid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut widths = vec![d];
    widths.extend_from_slice(&config.hidden);
    widths.push(1);
    let mut model = MlpModel::init(&widths, &mut rng);
    let x_all = to_array(&fit.xs);
    let mut params = flatten(&model);
    let mut adam = AdamState::new(params.len());
    let mut best = (f64::INFINITY, params.clone());
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..fit.len()).collect();
    for _ in 0..config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let xb = x_all.select(Axis(0), chunk);
            let yb: Vec<u8> = chunk.iter().map(|&i| fit.ys[i]).collect();
            let (_, g) = mlp_grad(&model, xb.view(), &yb, config.alpha);
            trainer::adam_step(&mut params, &g, &mut adam, config.lr)?;
            unflatten(&mut model, &params);
        }
        let val = metrics::log_loss(&model.predict_batch(&valid.xs), &valid.ys)?;
        if !val.is_finite() {
            return Err(Error::Divergence("MLP validation loss".into()));
        }
        if val < best.0 {
            best = (val, params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    unflatten(&mut model, &best.1);
    Ok(model)
}

// ---------------------------------------------------------------------------
// Benchmark

/// Models of the reference comparison that this crate does not implement.
pub const ABSENT_MODELS: [&str; 12] =
    ["XGBoost", "LightGBM", "CatBoost", "GBDT", "RF", "ET", "DT", "KNN", "RC", "SVM", "GNB", "FNN"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub model: String,
    pub report: Option<MetricsReport>,
    pub seconds: f64,
    /// Hash of the scaled training matrix the model was fitted on.
    pub input_hash: String,
}

/// Trains the KAN, MLP and LR on one shared split and scores them on the
/// same held-out partition.
pub fn benchmark(records: &[DesignRecord], kan: &TrainConfig, mlp: &MlpConfig, lr: &LrConfig) -> Result<Vec<BenchRow>> {
    let ys = trainer::labels_of(records)?;
    let (tr_idx, te_idx) = crate::prep::split(&ys, 1.0 - kan.test_fraction, kan.seed)?;
    let tr: Vec<&DesignRecord> = tr_idx.iter().map(|&i| &records[i]).collect();
    let te: Vec<&DesignRecord> = te_idx.iter().map(|&i| &records[i]).collect();
    let data = PreparedData::new(&tr, Some(&te), kan)?;
    let test = data.test.as_ref().expect("test partition");
    let hash = data.fit.hash();
    let score = |c: &dyn Classifier| metrics::evaluate(&c.predict_batch(&test.xs), &test.ys, 0.5);

    let mut rows = Vec::new();
    let t = std::time::Instant::now();
    let (model, _) = trainer::fit(&data, kan)?;
    rows.push(BenchRow { model: "KAN".into(), report: Some(score(&model)?), seconds: t.elapsed().as_secs_f64(), input_hash: hash.clone() });
    let t = std::time::Instant::now();
    let m = train_mlp(&data.fit, &data.valid, mlp)?;
    rows.push(BenchRow { model: "MLP".into(), report: Some(score(&m)?), seconds: t.elapsed().as_secs_f64(), input_hash: hash.clone() });
    let t = std::time::Instant::now();
    let l = train_lr(&data.fit, lr)?;
    rows.push(BenchRow { model: "LR".into(), report: Some(score(&l)?), seconds: t.elapsed().as_secs_f64(), input_hash: hash.clone() });
    for name in ABSENT_MODELS {
        rows.push(BenchRow { model: name.into(), report: None, seconds: 0.0, input_hash: String::new() });
    }
    Ok(rows)
}

/// Benchmark table with the columns of the reference comparison; models that
/// are not implemented get empty cells and a note.
pub fn write_bench_csv<W: Write>(rows: &[BenchRow], w: W) -> Result<()> {
    let mut out = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    let io = |e: csv::Error| Error::InvalidArgument(e.to_string());
    out.write_record(["Model", "Val. AUC", "Val. F1", "Val. Accuracy", "Val. Precision", "Val. Recall", "Val. Loss", "Note"])
        .map_err(io)?;
    for r in rows {
        let rec: Vec<String> = match &r.report {
            Some(m) => {
                let f = |v: f64| format!("{v:.4}");
                vec![r.model.clone(), f(m.auc), f(m.f1), f(m.accuracy), f(m.precision), f(m.recall), f(m.log_loss), String::new()]
            }
            None => {
                let mut v = vec![r.model.clone()];
                v.extend(std::iter::repeat_n(String::new(), 6));
                v.push("not implemented".into());
                v
            }
        };
        out.write_record(&rec).map_err(io)?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(n: usize, seed: u64, label: impl Fn(&[f64]) -> u8) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]).collect();
        let ys = xs.iter().map(|x| label(x)).collect();
        Matrix { xs, ys }
    }

    #[test]
    fn lr_separates_linear_data() {
        let data = matrix(400, 1, |x| u8::from(x[0] + x[1] > 1.0));
        let m = train_lr(&data, &LrConfig::default()).unwrap();
        let auc = metrics::roc_auc(&m.predict_batch(&data.xs), &data.ys).unwrap();
        assert!(auc > 0.999, "{auc}");
        // the solution is a stationary point of the penalised objective
        let n = data.len() as f64;
        let objective = |w: &[f64], b: f64| {
            let lm = LinearModel { weights: w.to_vec(), bias: b };
            let nll: f64 = data.xs.iter().zip(&data.ys).map(|(x, &y)| bce_term(lm.predict_proba(x), y)).sum();
            nll + 0.5 * w.iter().map(|v| v * v).sum::<f64>()
        };
        let h = 1e-5;
        let mut params = m.weights.clone();
        params.push(m.bias);
        for k in 0..params.len() {
            let mut up = params.clone();
            up[k] += h;
            let mut dn = params.clone();
            dn[k] -= h;
            let g = (objective(&up[..2], up[2]) - objective(&dn[..2], dn[2])) / (2.0 * h);
            assert!(g.abs() / n < 1e-6, "d/dp{k} = {g}");
        }
    }

    #[test]
    fn xor_needs_a_hidden_layer() {
        let xor = |x: &[f64]| u8::from((x[0] > 0.5) != (x[1] > 0.5));
        let fit = matrix(2000, 2, xor);
        let valid = matrix(400, 3, xor);
        let test = matrix(1000, 4, xor);
        let lr = train_lr(&fit, &LrConfig::default()).unwrap();
        let lr_auc = metrics::roc_auc(&lr.predict_batch(&test.xs), &test.ys).unwrap();
        assert!((lr_auc - 0.5).abs() < 0.1, "{lr_auc}");
        let cfg = MlpConfig { hidden: vec![32, 16], lr: 1e-2, max_epochs: 100, ..MlpConfig::default() };
        let mlp = train_mlp(&fit, &valid, &cfg).unwrap();
        let mlp_auc = metrics::roc_auc(&mlp.predict_batch(&test.xs), &test.ys).unwrap();
        assert!(mlp_auc > 0.9, "{mlp_auc}");
    }

    #[test]
    fn mlp_gradient_matches_finite_differences() {
        let data = matrix(8, 5, |x| u8::from(x[0] > x[1]));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut m = MlpModel::init(&[2, 5, 3, 1], &mut rng);
        let x = to_array(&data.xs);
        let (_, g) = mlp_grad(&m, x.view(), &data.ys, 0.1);
        let p = flatten(&m);
        let h = 1e-6;
        for k in 0..p.len() {
            let mut q = p.clone();
            q[k] += h;
            unflatten(&mut m, &q);
            let up = mlp_grad(&m, x.view(), &data.ys, 0.1).0;
            q[k] -= 2.0 * h;
            unflatten(&mut m, &q);
            let down = mlp_grad(&m, x.view(), &data.ys, 0.1).0;
            let fd = (up - down) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6 * (1.0 + fd.abs()), "param {k}: {fd} vs {}", g[k]);
        }
    }

    #[test]
    fn bench_csv_labels_absent_rows() {
        let rows = vec![
            BenchRow { model: "LR".into(), report: None, seconds: 0.0, input_hash: String::new() },
        ];
        let mut buf = Vec::new();
        write_bench_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("Model,Val. AUC,Val. F1,Val. Accuracy,Val. Precision,Val. Recall,Val. Loss"));
        assert!(text.contains("LR,,,,,,,not implemented"));
    }
}
