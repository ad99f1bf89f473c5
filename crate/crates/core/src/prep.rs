//! Feature preprocessing: min-max scaling, one-hot encoding, seeded
//! stratified splits and k-fold partitions.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-feature min-max scaler fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mins: Vec<f64>,
    pub maxs: Vec<f64>,
}

impl Scaler {
    /// Fits on rows of raw feature values. `names` labels constant-feature errors.
    pub fn fit<R: AsRef<[f64]>>(rows: &[R], names: &[String]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::TooFewRecords("cannot fit a scaler on no rows".into()))?;
        let d = first.as_ref().len();
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        for row in rows {
            let row = row.as_ref();
            if row.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: row.len() });
            }
            for (j, &v) in row.iter().enumerate() {
                mins[j] = mins[j].min(v);
                maxs[j] = maxs[j].max(v);
            }
        }
        for j in 0..d {
            if !(mins[j] < maxs[j]) {
                let name = names.get(j).cloned().unwrap_or_else(|| format!("#{j}"));
                return Err(Error::ConstantFeature(name));
            }
        }
        Ok(Scaler { mins, maxs })
    }

    /// Scaler that maps `[0, 1]` to itself in every coordinate.
    pub fn identity(d: usize) -> Self {
        Scaler { mins: vec![0.0; d], maxs: vec![1.0; d] }
    }

    pub fn len(&self) -> usize {
        self.mins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mins.is_empty()
    }

    pub fn range(&self, j: usize) -> f64 {
        self.maxs[j] - self.mins[j]
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| (v - self.mins[j]) / self.range(j))
            .collect()
    }

    pub fn inverse(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .enumerate()
            .map(|(j, &v)| v * self.range(j) + self.mins[j])
            .collect()
    }
}

/// Indicator vector with a single 1 at `index`.
pub fn one_hot(index: usize, k: usize) -> Result<Vec<u8>> {
    if index >= k {
        return Err(Error::IndexOutOfRange { index, len: k });
    }
    let mut z = vec![0u8; k];
    z[index] = 1;
    Ok(z)
}

fn class_indices(labels: &[u8]) -> [Vec<usize>; 2] {
    let mut out = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        out[usize::from(y != 0)].push(i);
    }
    out
}

/// Seeded stratified split into `(train, test)` index lists.
pub fn split(labels: &[u8], train_frac: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(Error::InvalidArgument(format!("train fraction {train_frac} not in (0, 1)")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for mut idx in class_indices(labels) {
        idx.shuffle(&mut rng);
        let n_train = (idx.len() as f64 * train_frac).round() as usize;
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::TooFewRecords(format!(
            "{} records cannot be split at {train_frac}",
            labels.len()
        )));
    }
    train.shuffle(&mut rng);
    test.shuffle(&mut rng);
    Ok((train, test))
}

/// `k` stratified `(train, valid)` index pairs.
pub fn kfold(labels: &[u8], k: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if k < 2 {
        return Err(Error::InvalidArgument("k-fold needs k >= 2".into()));
    }
    let classes = class_indices(labels);
    for (c, idx) in classes.iter().enumerate() {
        if idx.len() < k {
            return Err(Error::ClassTooSmall(format!(
                "class {c} has {} records, fewer than {k} folds",
                idx.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    let mut offset = 0;
    for mut idx in classes {
        idx.shuffle(&mut rng);
        let n = idx.len();
        for (pos, i) in idx.into_iter().enumerate() {
            folds[(pos + offset) % k].push(i);
        }
        // continue the round robin so fold sizes stay within one of each other
        offset = (offset + n) % k;
    }
    Ok((0..k)
        .map(|f| {
            let valid = folds[f].clone();
            let train = folds
                .iter()
                .enumerate()
                .filter(|&(g, _)| g != f)
                .flat_map(|(_, v)| v.iter().copied())
                .collect();
            (train, valid)
        })
        .collect())
}
