//! Binary classification metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Probability clip used by every log-loss computation.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }
}

/// Threshold-dependent metrics computed from hard predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Confusion,
    /// Set when precision or recall had a zero denominator and was reported as 0.
    pub zero_division: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub auc: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub log_loss: f64,
    pub confusion: Confusion,
    pub zero_division: bool,
}

/// Rank-based ROC AUC; tied scores share their average rank.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch(scores.len(), labels.len()));
    }
    let n_pos = labels.iter().filter(|&&y| y != 0).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1 ..= j share their mean
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        let pos_in_tie = order[i..j].iter().filter(|&&k| labels[k] != 0).count();
        rank_sum_pos += avg_rank * pos_in_tie as f64;
        i = j;
    }
    let n_pos = n_pos as f64;
    Ok((rank_sum_pos - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg as f64))
}

pub fn classification_metrics(predictions: &[u8], labels: &[u8]) -> Result<ClassificationMetrics> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch(predictions.len(), labels.len()));
    }
    let mut c = Confusion::default();
    for (&p, &y) in predictions.iter().zip(labels) {
        match (p != 0, y != 0) {
            (true, true) => c.tp += 1,
            (false, false) => c.tn += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    let n = c.total();
    let accuracy = if n == 0 { 0.0 } else { (c.tp + c.tn) as f64 / n as f64 };
    let mut zero_division = false;
    let mut ratio = |num: usize, den: usize| {
        if den == 0 {
            zero_division = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassificationMetrics { accuracy, precision, recall, f1, confusion: c, zero_division })
}

/// Mean binary cross-entropy with probabilities clipped to `[eps, 1 - eps]`.
pub fn log_loss(probs: &[f64], labels: &[u8]) -> Result<f64> {
    if probs.len() != labels.len() {
        return Err(Error::LengthMismatch(probs.len(), labels.len()));
    }
    if probs.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let total: f64 = probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| bce_term(p, y))
        .sum();
    Ok(total / probs.len() as f64)
}

#[inline]
pub(crate) fn bce_term(p: f64, y: u8) -> f64 {
    let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
    if y != 0 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Full report from probabilities thresholded at `tau`.
pub fn evaluate(probs: &[f64], labels: &[u8], tau: f64) -> Result<MetricsReport> {
    let preds: Vec<u8> = probs.iter().map(|&p| u8::from(p >= tau)).collect();
    let cm = classification_metrics(&preds, labels)?;
    Ok(MetricsReport {
        auc: roc_auc(probs, labels)?,
        f1: cm.f1,
        accuracy: cm.accuracy,
        precision: cm.precision,
        recall: cm.recall,
        log_loss: log_loss(probs, labels)?,
        confusion: cm.confusion,
        zero_division: cm.zero_division,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pairwise_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &yi) in labels.iter().enumerate() {
            if yi == 0 {
                continue;
            }
            for (j, &yj) in labels.iter().enumerate() {
                if yj != 0 {
                    continue;
                }
                den += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_extremes() {
        let labels = [0, 0, 1, 1];
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &labels).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 4], &labels).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(Error::SingleClass)));
    }

    #[test]
    fn auc_matches_pairwise_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let n = rng.gen_range(2..300);
            let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            labels[0] = 0;
            labels[1] = 1;
            // coarse scores force many ties
            let scores: Vec<f64> = (0..n).map(|_| (rng.gen_range(0..10) as f64) / 10.0).collect();
            let a = roc_auc(&scores, &labels).unwrap();
            assert!((a - pairwise_auc(&scores, &labels)).abs() < 1e-12);
        }
    }

    #[test]
    fn metric_examples() {
        let m = classification_metrics(&[1, 0, 1, 0], &[1, 0, 1, 0]).unwrap();
        assert_eq!((m.accuracy, m.f1, m.precision, m.recall), (1.0, 1.0, 1.0, 1.0));

        let mut preds = Vec::new();
        let mut labels = Vec::new();
        for (p, y) in [(1, 1), (0, 0), (1, 0), (0, 1)] {
            preds.extend(std::iter::repeat_n(p, 25));
            labels.extend(std::iter::repeat_n(y, 25));
        }
        let m = classification_metrics(&preds, &labels).unwrap();
        assert_eq!((m.accuracy, m.precision, m.recall, m.f1), (0.5, 0.5, 0.5, 0.5));

        let m = classification_metrics(&[0, 0], &[0, 1]).unwrap();
        assert!(m.zero_division);
        assert_eq!(m.precision, 0.0);
        assert!(classification_metrics(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn constant_half_log_loss_is_ln2() {
        let probs = vec![0.5; 8];
        let labels = [0, 1, 1, 0, 1, 0, 0, 1];
        assert_eq!(log_loss(&probs, &labels).unwrap(), std::f64::consts::LN_2);
    }

    proptest! {
        #[test]
        fn auc_invariant_under_monotone_map(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = rng.gen_range(4..200);
            let mut labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
            labels[0] = 0;
            labels[1] = 1;
            let s: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let t: Vec<f64> = s.iter().map(|x| x * x * x + x).collect();
            prop_assert!((roc_auc(&s, &labels).unwrap() - roc_auc(&t, &labels).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn confusion_reconstructs_accuracy(pairs in prop::collection::vec((0u8..2, 0u8..2), 1..200)) {
            let (p, y): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
            let m = classification_metrics(&p, &y).unwrap();
            let c = m.confusion;
            prop_assert_eq!(c.total(), p.len());
            prop_assert!(((c.tp + c.tn) as f64 / p.len() as f64 - m.accuracy).abs() < 1e-15);
        }
    }
}
