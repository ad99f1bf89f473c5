//! Attributions, spline curves, input sensitivities and latent projections
//! of a trained model.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kan::{classify, KanModel};
use crate::schema::DesignRecord;
use crate::spline::eval_local;

/// Feature counts up to this use exact subset enumeration.
pub const EXACT_MAX_FEATURES: usize = 12;
/// Background records drawn from the training set.
pub const BACKGROUND_SIZE: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionMethod {
    ExactSubset,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAttribution {
    pub feature: String,
    pub value_mm: f64,
    /// Signed contribution in probability units.
    pub contribution: f64,
    /// 1 for the largest absolute contribution.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub features: Vec<FeatureAttribution>,
    /// Model output with every feature at its background mean.
    pub baseline: f64,
    pub output: f64,
    /// Coalitions evaluated (exact) or permutations drawn (sampled).
    pub n_samples: usize,
    pub method: AttributionMethod,
    /// `|baseline + sum(contributions) - output|`.
    pub efficiency_residual: f64,
}

/// Seeded subset of `records` used as the attribution background.
pub fn sample_background(records: &[DesignRecord], seed: u64) -> Vec<DesignRecord> {
    if records.len() <= BACKGROUND_SIZE {
        return records.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.shuffle(&mut rng);
    idx.truncate(BACKGROUND_SIZE);
    idx.sort_unstable();
    idx.into_iter().map(|i| records[i].clone()).collect()
}

/// Shapley values of `f` at `x`, with absent features set to `reference`.
/// Returns the values, the sample count and the method used.
pub fn shapley_values<F>(f: F, x: &[f64], reference: &[f64], budget: usize, seed: u64) -> (Vec<f64>, usize, AttributionMethod)
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x.len();
    let point = |mask: u64| -> Vec<f64> {
        (0..n).map(|i| if mask >> i & 1 == 1 { x[i] } else { reference[i] }).collect()
    };
    if n <= EXACT_MAX_FEATURES {
        let n_sub = 1usize << n;
        let v: Vec<f64> = (0..n_sub as u64).into_par_iter().map(|m| f(&point(m))).collect();
        // weight |S|! (n - |S| - 1)! / n! for each coalition size
        let mut fact = vec![1.0f64; n + 1];
        for i in 1..=n {
            fact[i] = fact[i - 1] * i as f64;
        }
        let w: Vec<f64> = (0..n).map(|s| fact[s] * fact[n - s - 1] / fact[n]).collect();
        let phi = (0..n)
            .map(|i| {
                let mut acc = 0.0;
                for s in 0..n_sub {
                    if s >> i & 1 == 0 {
                        acc += w[s.count_ones() as usize] * (v[s | 1 << i] - v[s]);
                    }
                }
                acc
            })
            .collect();
        return (phi, n_sub, AttributionMethod::ExactSubset);
    }
    let perms: Vec<Vec<f64>> = (0..budget as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let mut cur = reference.to_vec();
            let mut prev = f(&cur);
            let mut phi = vec![0.0; n];
            for &i in &order {
                cur[i] = x[i];
                let next = f(&cur);
                phi[i] = next - prev;
                prev = next;
            }
            phi
        })
        .collect();
    let mut phi = vec![0.0; n];
    for p in &perms {
        for (a, b) in phi.iter_mut().zip(p) {
            *a += b;
        }
    }
    for a in &mut phi {
        *a /= budget as f64;
    }
    (phi, budget, AttributionMethod::Sampled)
}

/// Attribution of the predicted probability at `x` relative to the
/// background mean.
pub fn shapley_attribution(model: &KanModel, x: &DesignRecord, background: &[DesignRecord], budget: usize, seed: u64) -> Result<AttributionReport> {
    if background.is_empty() {
        return Err(Error::EmptyBackground);
    }
    let n = model.n_inputs();
    if budget < 2 * n {
        return Err(Error::InvalidArgument(format!("budget {budget} is below 2 x {n} features")));
    }
    let xs = model.scale(&x.values);
    model.forward(x)?;
    let mut mean = vec![0.0; n];
    for r in background {
        if r.values.len() != n || r.scenario != model.scenario_id {
            return Err(Error::SchemaMismatch("background record does not match the model".into()));
        }
        for (m, v) in mean.iter_mut().zip(model.scale(&r.values)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= background.len() as f64;
    }
    let f = |p: &[f64]| model.predict_scaled(p);
    let (phi, n_samples, method) = shapley_values(f, &xs, &mean, budget, seed);
    let baseline = f(&mean);
    let output = f(&xs);
    let residual = (baseline + phi.iter().sum::<f64>() - output).abs();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| phi[b].abs().total_cmp(&phi[a].abs()).then(a.cmp(&b)));
    let mut rank = vec![0; n];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r + 1;
    }
    let features = (0..n)
        .map(|i| FeatureAttribution {
            feature: model.feature_names[i].clone(),
            value_mm: x.values[i],
            contribution: phi[i],
            rank: rank[i],
        })
        .collect();
    Ok(AttributionReport { features, baseline, output, n_samples, method, efficiency_residual: residual })
}

// ---------------------------------------------------------------------------
// Spline curves

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeCurve {
    pub layer: usize,
    pub in_idx: usize,
    pub out_idx: usize,
    /// Sample positions in the layer's input units.
    pub x: Vec<f64>,
    pub phi: Vec<f64>,
    /// Population variance of `phi` over the sample grid.
    pub activity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineCurveSet {
    /// Relative positions in `[0, 1]`, mapped onto each layer's knot domain.
    pub grid: Vec<f64>,
    pub edges: Vec<EdgeCurve>,
}

/// Samples every edge on `n_points` uniform positions across its layer's
/// domain (`[0, 1]` for the input layer).
pub fn export_splines(model: &KanModel, n_points: usize) -> Result<SplineCurveSet> {
    if n_points < 2 {
        return Err(Error::InvalidArgument("n_points must be at least 2".into()));
    }
    let grid: Vec<f64> = (0..n_points).map(|t| t as f64 / (n_points - 1) as f64).collect();
    let mut edges = Vec::new();
    for (l, layer) in model.layers().iter().enumerate() {
        let (lo, hi) = layer.knots().domain();
        let x: Vec<f64> = grid.iter().map(|t| lo + t * (hi - lo)).collect();
        let locals: Vec<_> = x.iter().map(|&v| layer.knots().local(v)).collect();
        for i in 0..layer.d_in() {
            for j in 0..layer.d_out() {
                let c = layer.edge_coefficients(i, j);
                let phi: Vec<f64> = locals.iter().map(|loc| eval_local(loc, c)).collect();
                let mean = phi.iter().sum::<f64>() / n_points as f64;
                let activity = phi.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n_points as f64;
                edges.push(EdgeCurve { layer: l, in_idx: i, out_idx: j, x: x.clone(), phi, activity });
            }
        }
    }
    Ok(SplineCurveSet { grid, edges })
}

/// Input features ordered by the summed activity of their first-layer edges.
pub fn feature_activity(model: &KanModel, curves: &SplineCurveSet) -> Vec<(String, f64)> {
    let mut score = vec![0.0; model.n_inputs()];
    for e in curves.edges.iter().filter(|e| e.layer == 0) {
        score[e.in_idx] += e.activity;
    }
    let mut out: Vec<(String, f64)> = model.feature_names.iter().cloned().zip(score).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1));
    out
}

pub fn write_splines_csv<W: Write>(curves: &SplineCurveSet, mut w: W) -> Result<()> {
    writeln!(w, "layer,in_idx,out_idx,x,phi")?;
    for e in &curves.edges {
        for (x, p) in e.x.iter().zip(&e.phi) {
            writeln!(w, "{},{},{},{},{}", e.layer, e.in_idx, e.out_idx, x, p)?;
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Sensitivity

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensitivity {
    pub features: Vec<String>,
    /// `d prob / d x` for the scaled inputs.
    pub per_normalized: Vec<f64>,
    /// `d prob / d x` per millimetre of the raw inputs.
    pub per_mm: Vec<f64>,
    /// Some activation sat outside a knot span; its derivative is taken as 0.
    pub clamped: bool,
}

/// Exact derivative of the probability with respect to each input.
pub fn input_sensitivity(model: &KanModel, x: &DesignRecord) -> Result<Sensitivity> {
    let f = model.forward(x)?;
    let layers = model.layers();
    let mut delta = vec![f.prob * (1.0 - f.prob)];
    for (l, layer) in layers.iter().enumerate().rev() {
        let input = &f.activations[l];
        let mut next = vec![0.0; layer.d_in()];
        for (i, &xi) in input.iter().enumerate() {
            let (xc, clamped) = layer.knots().clamp(xi);
            if clamped {
                continue;
            }
            let local = layer.knots().local(xc);
            for (j, dj) in delta.iter().enumerate() {
                let c = layer.edge_coefficients(i, j);
                let slope: f64 = local.iter(c.len()).map(|(m, _, d)| c[m] * d).sum();
                next[i] += dj * slope;
            }
        }
        delta = next;
    }
    let per_mm = delta.iter().enumerate().map(|(j, d)| d / model.scaler.range(j)).collect();
    Ok(Sensitivity { features: model.feature_names.clone(), per_normalized: delta, per_mm, clamped: f.clamped })
}

// ---------------------------------------------------------------------------
// Latent projection

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatentRow {
    pub u: f64,
    pub v: f64,
    pub true_label: Option<u8>,
    pub pred_label: u8,
    pub prob: f64,
}

pub fn export_latent(model: &KanModel, records: &[DesignRecord]) -> Result<Vec<LatentRow>> {
    records
        .par_iter()
        .map(|r| {
            let (u, v) = model.latent(r)?;
            let prob = model.predict_proba(r)?;
            Ok(LatentRow { u, v, true_label: r.label, pred_label: classify(prob, model.threshold_tau), prob })
        })
        .collect()
}

pub fn write_latent_csv<W: Write>(rows: &[LatentRow], mut w: W) -> Result<()> {
    writeln!(w, "u,v,true_label,pred_label,prob")?;
    for r in rows {
        let t = r.true_label.map_or(String::new(), |t| t.to_string());
        writeln!(w, "{},{},{},{},{}", r.u, r.v, t, r.pred_label, r.prob)?;
    }
    Ok(())
}

/// Mean silhouette coefficient of labelled 2-D points.
pub fn silhouette(points: &[(f64, f64)], labels: &[u8]) -> Result<f64> {
    if points.len() != labels.len() {
        return Err(Error::LengthMismatch(points.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&y| y != 0).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::SingleClass);
    }
    let total: f64 = (0..points.len())
        .into_par_iter()
        .map(|i| {
            let mut sum = [0.0; 2];
            let mut cnt = [0usize; 2];
            for (j, p) in points.iter().enumerate() {
                if j == i {
                    continue;
                }
                let c = usize::from(labels[j] != 0);
                sum[c] += (p.0 - points[i].0).hypot(p.1 - points[i].1);
                cnt[c] += 1;
            }
            let own = usize::from(labels[i] != 0);
            if cnt[own] == 0 {
                return 0.0;
            }
            let a = sum[own] / cnt[own] as f64;
            let b = sum[1 - own] / cnt[1 - own] as f64;
            if a.max(b) == 0.0 {
                0.0
            } else {
                (b - a) / a.max(b)
            }
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    Ok(total / points.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kan::KanLayer;
    use crate::prep::Scaler;
    use crate::schema::ScenarioId;
    use crate::spline::KnotVector;
    use rand::Rng;

    /// Brute-force Shapley formula over all orderings.
    fn shapley_by_permutations(f: &dyn Fn(&[f64]) -> f64, x: &[f64], r: &[f64]) -> Vec<f64> {
        fn perms(n: usize) -> Vec<Vec<usize>> {
            if n == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for p in perms(n - 1) {
                for pos in 0..=p.len() {
                    let mut q = p.clone();
                    q.insert(pos, n - 1);
                    out.push(q);
                }
            }
            out
        }
        let n = x.len();
        let all = perms(n);
        let mut phi = vec![0.0; n];
        for order in &all {
            let mut cur = r.to_vec();
            let mut prev = f(&cur);
            for &i in order {
                cur[i] = x[i];
                let next = f(&cur);
                phi[i] += next - prev;
                prev = next;
            }
        }
        phi.iter().map(|p| p / all.len() as f64).collect()
    }

    fn toy_model(d: usize, seed: u64) -> KanModel {
        let names = (0..d).map(|i| format!("x{i}")).collect();
        KanModel::init(ScenarioId::Drilling, names, Scaler::identity(d), &[3, 2], 3, 3, seed).unwrap()
    }

    fn record(x: Vec<f64>) -> DesignRecord {
        DesignRecord::new(ScenarioId::Drilling, x)
    }

    fn background(d: usize, n: usize, seed: u64) -> Vec<DesignRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| record((0..d).map(|_| rng.gen_range(0.0..1.0)).collect())).collect()
    }

    #[test]
    fn exact_path_matches_permutation_formula() {
        let d = 8;
        let m = toy_model(d, 3);
        let x: Vec<f64> = (0..d).map(|i| (i as f64 * 0.37).fract()).collect();
        let r = vec![0.5; d];
        let f = |p: &[f64]| m.predict_scaled(p);
        let (phi, n, method) = shapley_values(f, &x, &r, 16, 0);
        assert_eq!((n, method), (256, AttributionMethod::ExactSubset));
        let oracle = shapley_by_permutations(&f, &x, &r);
        for (a, b) in phi.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn efficiency_null_player_and_symmetry() {
        let d = 8;
        let mut m = toy_model(d, 5);
        // feature 2 is ignored
        let nb = m.layers()[0].n_basis();
        for j in 0..m.layers()[0].d_out() {
            m.layers_mut()[0].set_edge(2, j, &vec![0.0; nb]).unwrap();
        }
        // features 4 and 5 share their edges
        for j in 0..m.layers()[0].d_out() {
            let c = m.layers()[0].edge_coefficients(4, j).to_vec();
            m.layers_mut()[0].set_edge(5, j, &c).unwrap();
        }
        let mut bg = background(d, 50, 1);
        for r in &mut bg {
            r.values[5] = r.values[4];
        }
        let mut x = vec![0.9, 0.1, 0.4, 0.7, 0.33, 0.33, 0.2, 0.8];
        let rep = shapley_attribution(&m, &record(x.clone()), &bg, 16, 0).unwrap();
        assert!(rep.efficiency_residual < 1e-9);
        assert_eq!(rep.features[2].contribution, 0.0);
        let (a, b) = (rep.features[4].contribution, rep.features[5].contribution);
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        x[2] = 0.0;
        let again = shapley_attribution(&m, &record(x), &bg, 16, 0).unwrap();
        assert_eq!(again.features[2].contribution, 0.0);
    }

    #[test]
    fn sampled_path_is_efficient_and_close_to_exact() {
        let d = 14;
        let f = |p: &[f64]| {
            let z: f64 = p.iter().enumerate().map(|(i, v)| (i as f64 - 6.0) * 0.1 * v).sum::<f64>() + p[0] * p[1];
            crate::kan::sigmoid(z)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(0.0..1.0)).collect();
        let r = vec![0.5; d];
        let (phi, n, method) = shapley_values(f, &x, &r, 200 * d, 7);
        assert_eq!((n, method), (200 * d, AttributionMethod::Sampled));
        let total: f64 = phi.iter().sum();
        assert!((f(&r) + total - f(&x)).abs() < 1e-12);
        let (again, _, _) = shapley_values(f, &x, &r, 200 * d, 7);
        assert_eq!(phi, again);
    }

    #[test]
    fn attribution_argument_errors() {
        let m = toy_model(3, 0);
        let x = record(vec![0.2, 0.3, 0.4]);
        assert!(matches!(shapley_attribution(&m, &x, &[], 10, 0), Err(Error::EmptyBackground)));
        assert!(shapley_attribution(&m, &x, &background(3, 4, 0), 5, 0).is_err());
    }

    #[test]
    fn zero_model_curves_and_sensitivity() {
        let m = KanModel::zeros(ScenarioId::Drilling, vec!["a".into(), "b".into()], Scaler::identity(2), &[2], 3, 3).unwrap();
        let c = export_splines(&m, 11).unwrap();
        assert_eq!(c.edges.len(), 2 * 2 + 2);
        assert!(c.edges.iter().all(|e| e.activity == 0.0 && e.phi.iter().all(|&p| p == 0.0)));
        let s = input_sensitivity(&m, &record(vec![0.3, 0.6])).unwrap();
        assert_eq!(s.per_normalized, vec![0.0, 0.0]);
    }

    #[test]
    fn doubling_coefficients_doubles_curve() {
        let mut m = toy_model(3, 9);
        let before = export_splines(&m, 21).unwrap();
        let c: Vec<f64> = m.layers()[0].edge_coefficients(1, 2).iter().map(|v| 2.0 * v).collect();
        m.layers_mut()[0].set_edge(1, 2, &c).unwrap();
        let after = export_splines(&m, 21).unwrap();
        let pick = |s: &SplineCurveSet| s.edges.iter().find(|e| e.layer == 0 && e.in_idx == 1 && e.out_idx == 2).unwrap().phi.clone();
        for (a, b) in pick(&before).iter().zip(pick(&after)) {
            assert!((2.0 * a - b).abs() < 1e-15);
        }
        let mut x = Vec::new();
        let mut y = Vec::new();
        write_splines_csv(&before, &mut x).unwrap();
        write_splines_csv(&export_splines(&toy_model(3, 9), 21).unwrap(), &mut y).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn sensitivity_matches_finite_differences() {
        let scaler = Scaler::fit(&[vec![0.0, 10.0, -1.0], vec![2.0, 30.0, 1.0]], &["a".into(), "b".into(), "c".into()]).unwrap();
        let m = KanModel::init(ScenarioId::Drilling, vec!["a".into(), "b".into(), "c".into()], scaler, &[4, 2], 4, 3, 11).unwrap();
        let raw = vec![0.7, 17.0, 0.2];
        let s = input_sensitivity(&m, &record(raw.clone())).unwrap();
        assert!(!s.clamped);
        for j in 0..3 {
            let h = 1e-6;
            let mut up = raw.clone();
            up[j] += h;
            let mut dn = raw.clone();
            dn[j] -= h;
            let fd = (m.predict_proba(&record(up)).unwrap() - m.predict_proba(&record(dn)).unwrap()) / (2.0 * h);
            assert!((fd - s.per_mm[j]).abs() <= 1e-4 * fd.abs().max(1e-8), "{j}: {fd} vs {}", s.per_mm[j]);
            assert!((s.per_mm[j] * m.scaler.range(j) - s.per_normalized[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn monotone_feature_attribution_follows_sensitivity_sign() {
        // one input with an increasing edge, the rest ignored
        let names: Vec<String> = (0..4).map(|i| format!("x{i}")).collect();
        let kv = KnotVector::uniform(3, 3, 0.0, 1.0).unwrap();
        let nb = kv.n_basis();
        let mut l0 = KanLayer::zeros(4, 1, kv).unwrap();
        l0.set_edge(0, 0, &(0..nb).map(|m| m as f64 * 0.2 - 0.6).collect::<Vec<_>>()).unwrap();
        let mut m = KanModel::zeros(ScenarioId::Drilling, names, Scaler::identity(4), &[], 3, 3).unwrap();
        m.layers_mut()[0] = l0;
        let bg = background(4, 30, 4);
        for x0 in [0.1, 0.45, 0.9] {
            let x = record(vec![x0, 0.5, 0.5, 0.5]);
            let s = input_sensitivity(&m, &x).unwrap();
            assert!(s.per_normalized[0] > 0.0);
            let rep = shapley_attribution(&m, &x, &bg, 8, 0).unwrap();
            let mean0 = bg.iter().map(|r| r.values[0]).sum::<f64>() / bg.len() as f64;
            assert_eq!(rep.features[0].contribution > 0.0, x0 > mean0);
        }
    }

    #[test]
    fn latent_rows_and_silhouette() {
        let m = toy_model(3, 2);
        let recs: Vec<DesignRecord> = background(3, 20, 8).into_iter().map(|r| r.with_label(1)).collect();
        let rows = export_latent(&m, &recs).unwrap();
        assert_eq!(rows.len(), recs.len());
        for (row, r) in rows.iter().zip(&recs) {
            assert_eq!((row.u, row.v), m.latent(r).unwrap());
        }
        let pts = [(0.0, 0.0), (0.1, 0.0), (5.0, 5.0), (5.1, 5.0)];
        let s = silhouette(&pts, &[0, 0, 1, 1]).unwrap();
        assert!(s > 0.9);
        let s = silhouette(&pts, &[0, 1, 0, 1]).unwrap();
        assert!(s < 0.0);
    }
}
