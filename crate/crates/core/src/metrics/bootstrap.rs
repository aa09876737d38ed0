use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{macro_f1, same_len, MetricsError};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BootstrapMetric {
    BinaryF1 { positive: usize },
    MacroF1 { num_labels: usize },
}

impl BootstrapMetric {
    pub fn compute(&self, golds: &[usize], preds: &[usize], idx: &[usize]) -> f64 {
        match *self {
            BootstrapMetric::BinaryF1 { positive } => {
                let (mut tp, mut fp, mut fn_) = (0, 0, 0);
                for &i in idx {
                    match (preds[i] == positive, golds[i] == positive) {
                        (true, true) => tp += 1,
                        (true, false) => fp += 1,
                        (false, true) => fn_ += 1,
                        _ => {}
                    }
                }
                // Single correctly rounded division, so equal F1 values compare equal.
                if tp == 0 {
                    0.0
                } else {
                    (2 * tp) as f64 / (2 * tp + fp + fn_) as f64
                }
            }
            BootstrapMetric::MacroF1 { num_labels } => {
                let g: Vec<usize> = idx.iter().map(|&i| golds[i]).collect();
                let p: Vec<usize> = idx.iter().map(|&i| preds[i]).collect();
                macro_f1(&p, &g, num_labels)
            }
        }
    }

    fn max_label(&self) -> usize {
        match *self {
            BootstrapMetric::BinaryF1 { .. } => usize::MAX,
            BootstrapMetric::MacroF1 { num_labels } => num_labels,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub wins_a: usize,
    pub wins_b: usize,
    pub ties: usize,
    /// Probability that A is not better: `1 - (wins_a + ties/2) / R`.
    pub p_value: f64,
}

/// Resample indices `r` times with replacement and count how often system A
/// beats system B. Resample `i` draws from `SplitMix64::stream(seed, i)`, so
/// the result does not depend on how the work is scheduled.
pub fn paired_bootstrap(
    golds: &[usize],
    preds_a: &[usize],
    preds_b: &[usize],
    metric: BootstrapMetric,
    r: usize,
    seed: u64,
) -> Result<BootstrapResult, MetricsError> {
    same_len(golds.len(), preds_a.len())?;
    same_len(golds.len(), preds_b.len())?;
    let limit = metric.max_label();
    if let Some(&bad) = golds.iter().chain(preds_a).chain(preds_b).find(|&&l| l >= limit) {
        return Err(MetricsError::LabelOutOfRange(bad));
    }
    let n = golds.len();
    let (wins_a, wins_b, ties) = (0..r)
        .into_par_iter()
        .map(|i| {
            let mut rng = SplitMix64::stream(seed, i as u64);
            let idx: Vec<usize> = (0..n).map(|_| rng.next_below(n)).collect();
            let a = metric.compute(golds, preds_a, &idx);
            let b = metric.compute(golds, preds_b, &idx);
            if a > b {
                (1, 0, 0)
            } else if b > a {
                (0, 1, 0)
            } else {
                (0, 0, 1)
            }
        })
        .reduce(|| (0, 0, 0), |x, y| (x.0 + y.0, x.1 + y.1, x.2 + y.2));
    let p_value = if r == 0 { 0.5 } else { 1.0 - (wins_a as f64 + 0.5 * ties as f64) / r as f64 };
    Ok(BootstrapResult { wins_a, wins_b, ties, p_value })
}
