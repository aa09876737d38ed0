//! Evaluation and analysis computations.

mod bootstrap;

pub use bootstrap::{paired_bootstrap, BootstrapMetric, BootstrapResult};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{LabelSpace, ScoreVector};
use crate::selection::AmbigSet;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("no positive labels")]
    NoPositives,
    #[error("label index {0} outside the label space")]
    LabelOutOfRange(usize),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("not a probability distribution: {0}")]
    InvalidDistribution(String),
    #[error("need at least two observations")]
    TooFewObservations,
    #[error("ranks have zero variance")]
    ZeroVariance,
    #[error("value {0} lies outside the histogram bins")]
    OutsideBins(f64),
    #[error("histogram needs at least two increasing edges")]
    InvalidBins,
}

fn same_len(a: usize, b: usize) -> Result<(), MetricsError> {
    if a == b {
        Ok(())
    } else {
        Err(MetricsError::LengthMismatch(a, b))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf1 {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 from confusion counts; 0/0 counts as 0.
pub fn prf1_from_counts(tp: usize, fp: usize, fn_: usize) -> Prf1 {
    let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
    Prf1 { precision, recall, f1 }
}

pub fn prf1_from_predictions(preds: &[bool], golds: &[bool]) -> Result<Prf1, MetricsError> {
    same_len(preds.len(), golds.len())?;
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for (&p, &g) in preds.iter().zip(golds) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(prf1_from_counts(tp, fp, fn_))
}

/// Binary metrics with prediction rule `score >= threshold`.
pub fn prf1_binary(scores: &[f64], golds: &[bool], threshold: f64) -> Result<Prf1, MetricsError> {
    same_len(scores.len(), golds.len())?;
    let preds: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
    prf1_from_predictions(&preds, golds)
}

/// Average precision: walk scores in descending order, treat each group of
/// tied scores as one step, and sum precision times the recall gained.
pub fn aupr(scores: &[f64], labels: &[bool]) -> Result<f64, MetricsError> {
    same_len(scores.len(), labels.len())?;
    let positives = labels.iter().filter(|&&l| l).count();
    if positives == 0 {
        return Err(MetricsError::NoPositives);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut last_tp) = (0usize, 0usize, 0usize);
    let mut area = 0.0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            tp += usize::from(labels[order[i]]);
            seen += 1;
            i += 1;
        }
        if tp > last_tp {
            area += (tp as f64 / seen as f64) * (tp - last_tp) as f64;
            last_tp = tp;
        }
    }
    Ok(area / positives as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticlassReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_label: Vec<LabelReport>,
    /// Rows are gold labels, columns predicted labels, in label-space order.
    pub confusion: Vec<Vec<usize>>,
}

/// Accuracy, per-label P/R/F1, macro-F1 over every label in the space, and
/// the confusion matrix. Inputs are label-space indices.
pub fn multiclass_report(preds: &[usize], golds: &[usize], space: &LabelSpace) -> Result<MulticlassReport, MetricsError> {
    same_len(preds.len(), golds.len())?;
    let c = space.len();
    let mut confusion = vec![vec![0usize; c]; c];
    for (&p, &g) in preds.iter().zip(golds) {
        if p >= c {
            return Err(MetricsError::LabelOutOfRange(p));
        }
        if g >= c {
            return Err(MetricsError::LabelOutOfRange(g));
        }
        confusion[g][p] += 1;
    }
    let correct: usize = (0..c).map(|i| confusion[i][i]).sum();
    let accuracy = if preds.is_empty() { 0.0 } else { correct as f64 / preds.len() as f64 };
    let per_label: Vec<LabelReport> = (0..c)
        .map(|l| {
            let tp = confusion[l][l];
            let support: usize = confusion[l].iter().sum();
            let predicted: usize = (0..c).map(|g| confusion[g][l]).sum();
            let m = prf1_from_counts(tp, predicted - tp, support - tp);
            LabelReport { label: space.id(l).to_string(), precision: m.precision, recall: m.recall, f1: m.f1, support }
        })
        .collect();
    let macro_f1 = per_label.iter().map(|r| r.f1).sum::<f64>() / c as f64;
    Ok(MulticlassReport { accuracy, macro_f1, per_label, confusion })
}

/// [`multiclass_report`] over label ids.
pub fn multiclass_report_ids<S: AsRef<str>>(preds: &[S], golds: &[S], space: &LabelSpace) -> Result<MulticlassReport, MetricsError> {
    let idx = |v: &[S]| {
        v.iter()
            .map(|s| space.index_of(s.as_ref()).ok_or_else(|| MetricsError::UnknownLabel(s.as_ref().to_string())))
            .collect::<Result<Vec<_>, _>>()
    };
    multiclass_report(&idx(preds)?, &idx(golds)?, space)
}

pub fn macro_f1(preds: &[usize], golds: &[usize], num_labels: usize) -> f64 {
    let mut tp = vec![0usize; num_labels];
    let mut predicted = vec![0usize; num_labels];
    let mut support = vec![0usize; num_labels];
    for (&p, &g) in preds.iter().zip(golds) {
        predicted[p] += 1;
        support[g] += 1;
        if p == g {
            tp[p] += 1;
        }
    }
    (0..num_labels)
        .map(|l| prf1_from_counts(tp[l], predicted[l] - tp[l], support[l] - tp[l]).f1)
        .sum::<f64>()
        / num_labels as f64
}

/// Shannon entropy in bits; `0 log 0 = 0`.
pub fn entropy_base2(probabilities: &[f64]) -> Result<f64, MetricsError> {
    if probabilities.is_empty() {
        return Err(MetricsError::InvalidDistribution("empty".into()));
    }
    if let Some(p) = probabilities.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(MetricsError::InvalidDistribution(format!("entry {p}")));
    }
    let total: f64 = probabilities.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(MetricsError::InvalidDistribution(format!("sums to {total}")));
    }
    Ok(-probabilities.iter().filter(|&&p| p > 0.0).map(|p| p * p.log2()).sum::<f64>())
}

/// Max-subtracted softmax.
pub fn softmax(scores: &ScoreVector) -> Vec<f64> {
    softmax_slice(scores.as_slice())
}

pub fn softmax_slice(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Entropy of the softmaxed scores.
pub fn score_entropy(scores: &ScoreVector) -> f64 {
    entropy_base2(&softmax(scores)).expect("softmax output is a distribution")
}

/// 1-based ranks with ties sharing their average rank.
pub fn fractional_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    same_len(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(MetricsError::TooFewObservations);
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Pearson correlation of fractional ranks.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, MetricsError> {
    same_len(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(MetricsError::TooFewObservations);
    }
    pearson(&fractional_ranks(x), &fractional_ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBar<L> {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub label: L,
    pub height: f64,
}

/// Histogram whose bar heights sum to 1 within each label group. Bins are
/// `[edges[i], edges[i+1])`, the last one closed. Groups listed in `groups`
/// with no values get zero-height bars.
pub fn label_normalized_histogram<L: PartialEq + Clone + std::fmt::Debug>(
    values: &[f64],
    labels: &[L],
    edges: &[f64],
    groups: &[L],
) -> Result<Vec<HistogramBar<L>>, MetricsError> {
    same_len(values.len(), labels.len())?;
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(MetricsError::InvalidBins);
    }
    let bins = edges.len() - 1;
    let mut counts = vec![vec![0usize; bins]; groups.len()];
    for (&v, l) in values.iter().zip(labels) {
        if !(v >= edges[0] && v <= edges[bins]) {
            return Err(MetricsError::OutsideBins(v));
        }
        let bin = edges[1..].partition_point(|&e| e <= v).min(bins - 1);
        if let Some(g) = groups.iter().position(|x| x == l) {
            counts[g][bin] += 1;
        }
    }
    let mut out = Vec::with_capacity(groups.len() * bins);
    for (g, label) in groups.iter().enumerate() {
        let total: usize = counts[g].iter().sum();
        if total == 0 {
            log::warn!("histogram group {label:?} has no values");
        }
        for b in 0..bins {
            let height = if total == 0 { 0.0 } else { counts[g][b] as f64 / total as f64 };
            out.push(HistogramBar { bin_lo: edges[b], bin_hi: edges[b + 1], label: label.clone(), height });
        }
    }
    Ok(out)
}

/// Percentage of test examples whose gold label is in their ambiguous set.
pub fn gold_in_ambig_rate(ambig_sets: &[AmbigSet], golds: &[String]) -> Result<f64, MetricsError> {
    same_len(ambig_sets.len(), golds.len())?;
    if golds.is_empty() {
        return Ok(0.0);
    }
    let hits = ambig_sets.iter().zip(golds).filter(|(a, g)| a.contains(g)).count();
    Ok(100.0 * hits as f64 / golds.len() as f64)
}

/// Mean over test examples of the share of demonstrations whose gold label
/// equals the test gold label, as a percentage. Empty demo sets are skipped.
pub fn demo_gold_match_rate(selected_demo_labels: &[Vec<String>], golds: &[String]) -> Result<f64, MetricsError> {
    same_len(selected_demo_labels.len(), golds.len())?;
    let mut total = 0.0;
    let mut counted = 0usize;
    for (i, (demos, gold)) in selected_demo_labels.iter().zip(golds).enumerate() {
        if demos.is_empty() {
            log::warn!("test example {i} has no demonstrations; skipped in match rate");
            continue;
        }
        total += demos.iter().filter(|d| *d == gold).count() as f64 / demos.len() as f64;
        counted += 1;
    }
    Ok(if counted == 0 { 0.0 } else { 100.0 * total / counted as f64 })
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    /// Brute-force AP: one PR point per distinct threshold.
    fn aupr_oracle(scores: &[f64], labels: &[bool]) -> f64 {
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let pos = labels.iter().filter(|l| **l).count() as f64;
        let mut prev_r = 0.0;
        let mut ap = 0.0;
        for t in thresholds {
            let tp = scores.iter().zip(labels).filter(|(s, l)| **s >= t && **l).count() as f64;
            let k = scores.iter().filter(|s| **s >= t).count() as f64;
            let r = tp / pos;
            ap += (r - prev_r) * (tp / k);
            prev_r = r;
        }
        ap
    }

    #[test]
    fn always_true_baseline_row() {
        // Test split: 1,046 true and 6,813 false instances.
        let golds: Vec<bool> = (0..7859).map(|i| i < 1046).collect();
        let m = prf1_binary(&vec![1.0; 7859], &golds, 0.5).unwrap();
        assert_abs_diff_eq!((m.precision * 1000.0).round() / 10.0, 13.3);
        assert_eq!(m.recall, 1.0);
        assert_abs_diff_eq!((m.f1 * 1000.0).round() / 10.0, 23.5);
    }

    #[test]
    fn prf1_conventions() {
        let golds = [true, false, true];
        assert_eq!(prf1_binary(&[0.9, 0.1, 0.8], &golds, 0.5).unwrap(), Prf1 { precision: 1.0, recall: 1.0, f1: 1.0 });
        assert_eq!(prf1_binary(&[0.1, 0.1, 0.1], &golds, 0.5).unwrap(), Prf1 { precision: 0.0, recall: 0.0, f1: 0.0 });
        assert!(prf1_binary(&[0.1], &golds, 0.5).is_err());
    }

    #[test]
    fn aupr_examples() {
        assert_eq!(aupr(&[0.9, 0.8, 0.1], &[true, true, false]).unwrap(), 1.0);
        assert_abs_diff_eq!(aupr(&[0.9, 0.8, 0.7], &[true, false, true]).unwrap(), 0.5 + (2.0 / 3.0) * 0.5, epsilon = 1e-12);
        assert_eq!(aupr(&[0.1], &[false]), Err(MetricsError::NoPositives));
    }

    #[test]
    fn aupr_groups_ties() {
        // All tied: one step at precision 1/2.
        assert_abs_diff_eq!(aupr(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
    }

    #[test]
    fn multiclass_constant_predictor() {
        let space = LabelSpace::from_ids(&["a", "b"]).unwrap();
        let r = multiclass_report(&[0, 0, 0, 0], &[0, 0, 1, 1], &space).unwrap();
        assert_abs_diff_eq!(r.macro_f1, (2.0 / 3.0) / 2.0, epsilon = 1e-12);
        assert_eq!(r.confusion, vec![vec![2, 0], vec![2, 0]]);
    }

    #[test]
    fn multiclass_perfect_and_errors() {
        let space = LabelSpace::from_ids(&["a", "b", "c"]).unwrap();
        let r = multiclass_report(&[0, 1, 2], &[0, 1, 2], &space).unwrap();
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.confusion, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        assert!(multiclass_report(&[3], &[0], &space).is_err());
        assert!(multiclass_report_ids(&["a", "z"], &["a", "b"], &space).is_err());
    }

    #[test]
    fn multiclass_three_class_by_hand() {
        let space = LabelSpace::from_ids(&["a", "b", "c"]).unwrap();
        let golds = [0, 0, 0, 1, 1, 2];
        let preds = [0, 1, 0, 1, 2, 2];
        // Hand counts: a tp2 fp0 fn1; b tp1 fp1 fn1; c tp1 fp1 fn0.
        let fa = 2.0 * 1.0 * (2.0 / 3.0) / (1.0 + 2.0 / 3.0);
        let fb = 0.5;
        let fc = 2.0 * 0.5 * 1.0 / 1.5;
        let r = multiclass_report(&preds, &golds, &space).unwrap();
        assert_abs_diff_eq!(r.macro_f1, (fa + fb + fc) / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.accuracy, 4.0 / 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(macro_f1(&preds, &golds, 3), r.macro_f1, epsilon = 1e-15);
    }

    #[test]
    fn absent_labels_drag_macro() {
        let space = LabelSpace::from_ids(&["a", "b", "c"]).unwrap();
        let r = multiclass_report(&[0, 1], &[0, 1], &space).unwrap();
        assert_abs_diff_eq!(r.macro_f1, 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn entropy_values() {
        let uniform = |c: usize| vec![1.0 / c as f64; c];
        assert_abs_diff_eq!(entropy_base2(&uniform(4)).unwrap(), 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(entropy_base2(&uniform(5)).unwrap(), 2.32, epsilon = 0.01);
        assert_abs_diff_eq!(entropy_base2(&uniform(27)).unwrap(), 4.75, epsilon = 0.01);
        assert_eq!(entropy_base2(&[1.0, 0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(entropy_base2(&[0.5, 0.5]).unwrap(), 1.0);
        assert!(entropy_base2(&[0.5, 0.4]).is_err());
        assert!(entropy_base2(&[1.5, -0.5]).is_err());
    }

    #[test]
    fn softmax_closed_form() {
        let p = softmax_slice(&[0.0, 3f64.ln()]);
        assert_abs_diff_eq!(p[0], 0.25, epsilon = 1e-15);
        assert_abs_diff_eq!(p[1], 0.75, epsilon = 1e-15);
        assert_eq!(softmax_slice(&[-2.0; 4]), vec![0.25; 4]);
    }

    /// Rank-then-Pearson written out independently.
    fn spearman_oracle(x: &[f64], y: &[f64]) -> f64 {
        let rank = |v: &[f64]| -> Vec<f64> {
            v.iter()
                .map(|a| {
                    let less = v.iter().filter(|b| *b < a).count() as f64;
                    let eq = v.iter().filter(|b| *b == a).count() as f64;
                    less + (eq + 1.0) / 2.0
                })
                .collect()
        };
        let (rx, ry) = (rank(x), rank(y));
        let n = x.len() as f64;
        let mx = rx.iter().sum::<f64>() / n;
        let my = ry.iter().sum::<f64>() / n;
        let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
        let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
        let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn spearman_examples() {
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0, epsilon = 1e-12);
        // x ranks [1, 2.5, 2.5, 4], y ranks [2, 1, 3, 4].
        let x = [1.0, 2.0, 2.0, 3.0];
        let y = [2.0, 1.0, 3.0, 4.0];
        let hand = {
            let rx = [1.0, 2.5, 2.5, 4.0];
            let ry = [2.0, 1.0, 3.0, 4.0];
            let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - 2.5) * (b - 2.5)).sum();
            let vx: f64 = rx.iter().map(|a| (a - 2.5f64).powi(2)).sum();
            let vy: f64 = ry.iter().map(|b| (b - 2.5f64).powi(2)).sum();
            cov / (vx * vy).sqrt()
        };
        assert_abs_diff_eq!(spearman(&x, &y).unwrap(), hand, epsilon = 1e-12);
        assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), Err(MetricsError::ZeroVariance));
        assert_eq!(spearman(&[1.0], &[1.0]), Err(MetricsError::TooFewObservations));
    }

    #[test]
    fn histogram_examples() {
        let bars = label_normalized_histogram(&[0.5, 1.5], &["T", "F"], &[0.0, 1.0, 2.0], &["T", "F"]).unwrap();
        let heights: Vec<f64> = bars.iter().map(|b| b.height).collect();
        assert_eq!(heights, vec![1.0, 0.0, 0.0, 1.0]);
        let bars = label_normalized_histogram(&[0.5, 1.5, 2.0, 0.1], &["T"; 4], &[0.0, 1.0, 2.0], &["T"]).unwrap();
        assert_eq!(bars.iter().map(|b| b.height).collect::<Vec<_>>(), vec![0.5, 0.5]);
        let empty = label_normalized_histogram(&[0.5], &["T"], &[0.0, 1.0], &["T", "F"]).unwrap();
        assert_eq!(empty[1].height, 0.0);
        assert!(label_normalized_histogram(&[3.0], &["T"], &[0.0, 1.0], &["T"]).is_err());
    }

    #[test]
    fn histogram_matches_brute_force_binning() {
        let mut rng = crate::rng::SplitMix64::new(11);
        let values: Vec<f64> = (0..100).map(|_| rng.next_f64() * 10.0).collect();
        let labels: Vec<bool> = (0..100).map(|_| rng.next_below(2) == 1).collect();
        let edges: Vec<f64> = (0..=5).map(|i| i as f64 * 2.0).collect();
        let bars = label_normalized_histogram(&values, &labels, &edges, &[true, false]).unwrap();
        for bar in &bars {
            let group: Vec<f64> = values.iter().zip(&labels).filter(|(_, l)| **l == bar.label).map(|(v, _)| *v).collect();
            let inside = group
                .iter()
                .filter(|v| **v >= bar.bin_lo && (**v < bar.bin_hi || (bar.bin_hi == 10.0 && **v <= 10.0)))
                .count();
            assert_abs_diff_eq!(bar.height, inside as f64 / group.len() as f64, epsilon = 1e-15);
        }
        for label in [true, false] {
            let sum: f64 = bars.iter().filter(|b| b.label == label).map(|b| b.height).sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn ambig_and_match_rates() {
        let set = |a: &str, b: &str| AmbigSet { first: a.into(), second: b.into() };
        let golds = vec!["A".to_string(), "B".to_string()];
        assert_eq!(gold_in_ambig_rate(&[set("A", "B"), set("B", "A")], &golds).unwrap(), 100.0);
        assert_eq!(gold_in_ambig_rate(&[set("A", "C"), set("A", "C")], &golds).unwrap(), 50.0);
        let demos = vec![vec!["A".to_string(); 4], vec!["B".into(), "B".into(), "A".into(), "A".into()]];
        assert_eq!(demo_gold_match_rate(&demos, &golds).unwrap(), 75.0);
        assert_eq!(demo_gold_match_rate(&[vec!["C".into()], vec![]], &golds).unwrap(), 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn aupr_matches_oracle(pairs in proptest::collection::vec((0u8..6, any::<bool>()), 1..12)) {
            let scores: Vec<f64> = pairs.iter().map(|(s, _)| *s as f64 / 5.0).collect();
            let mut labels: Vec<bool> = pairs.iter().map(|(_, l)| *l).collect();
            labels[0] = true;
            let got = aupr(&scores, &labels).unwrap();
            prop_assert!((got - aupr_oracle(&scores, &labels)).abs() < 1e-9);
            prop_assert!(got > 0.0 && got <= 1.0);
        }

        #[test]
        fn spearman_matches_oracle_and_is_rank_invariant(pairs in proptest::collection::vec((0u8..5, 0u8..5), 2..12)) {
            let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            if let Ok(r) = spearman(&x, &y) {
                prop_assert!((r - spearman_oracle(&x, &y)).abs() < 1e-9);
                let tx: Vec<f64> = x.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
                prop_assert!((spearman(&tx, &y).unwrap() - r).abs() < 1e-12);
            }
        }

        #[test]
        fn entropy_bounded_by_uniform(raw in proptest::collection::vec(0.0f64..1.0, 2..10)) {
            let total: f64 = raw.iter().sum();
            prop_assume!(total > 1e-6);
            let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
            let h = entropy_base2(&p).unwrap();
            prop_assert!(h >= 0.0 && h <= (p.len() as f64).log2() + 1e-12);
        }

        #[test]
        fn softmax_shift_invariant(scores in proptest::collection::vec(-20.0f64..0.0, 1..8), shift in -100.0f64..100.0) {
            let a = softmax_slice(&scores);
            let b = softmax_slice(&scores.iter().map(|s| s + shift).collect::<Vec<_>>());
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            let sv = ScoreVector::new(scores.clone()).unwrap();
            let am = a.iter().enumerate().fold(0, |best, (i, v)| if *v > a[best] { i } else { best });
            prop_assert_eq!(Some(am), sv.argmax());
        }

        #[test]
        fn constant_predictor_macro_f1(c in 2usize..8, per in 1usize..6, which in 0usize..8) {
            let which = which % c;
            let ids: Vec<String> = (0..c).map(|i| format!("l{i}")).collect();
            let space = LabelSpace::from_ids(&ids).unwrap();
            let golds: Vec<usize> = (0..c).flat_map(|l| std::iter::repeat(l).take(per)).collect();
            let preds = vec![which; golds.len()];
            let r = multiclass_report(&preds, &golds, &space).unwrap();
            let f1_major = 2.0 * (1.0 / c as f64) / (1.0 / c as f64 + 1.0);
            prop_assert!((r.macro_f1 - f1_major / c as f64).abs() < 1e-12);
        }
    }
}
