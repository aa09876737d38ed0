use promptlab_core::metrics::{label_normalized_histogram, spearman};
use serde::Serialize;

use super::distractor::FeatureRow;
use super::{evaluate, mean_entropy, write_confusion, PredictionRow};
use crate::error::CliError;
use crate::runtime::{read_jsonl, write_csv, write_json, Context};

const STATIC_NAMES: [&str; 7] =
    ["len_diff", "cos_head", "cos_infl", "freq_head", "freq_infl", "rankdiff_head", "rankdiff_infl"];
const CTX_NAMES: [&str; 6] = ["lp_mean", "lp_min", "lp_max", "lnrank_mean", "lnrank_min", "lnrank_max"];

/// Column names for a feature row of the given width.
pub fn feature_names(width: usize) -> Vec<String> {
    let mut names: Vec<String> = STATIC_NAMES.iter().map(|s| s.to_string()).collect();
    names.extend(CTX_NAMES.iter().map(|s| format!("ctx_{s}")));
    names.extend(CTX_NAMES.iter().map(|s| format!("ctx_correct_{s}")));
    names.truncate(width);
    while names.len() < width {
        names.push(format!("f{}", names.len()));
    }
    names
}

#[derive(Debug, Serialize)]
struct PredictionAnalysis {
    n: usize,
    accuracy: f64,
    macro_f1: f64,
    mean_entropy: f64,
    mean_entropy_correct: Option<f64>,
    mean_entropy_wrong: Option<f64>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn analyze_predictions(ctx: &Context, rows: &[PredictionRow], out: &std::path::Path) -> Result<String, CliError> {
    let space = ctx.cfg.label_space()?;
    let report = evaluate(rows, &space)?;
    let (right, wrong): (Vec<&PredictionRow>, Vec<&PredictionRow>) = rows.iter().partition(|r| r.pred == r.gold);
    let a = PredictionAnalysis {
        n: rows.len(),
        accuracy: report.accuracy,
        macro_f1: report.macro_f1,
        mean_entropy: mean_entropy(rows),
        mean_entropy_correct: mean(&right.iter().map(|r| r.entropy).collect::<Vec<_>>()),
        mean_entropy_wrong: mean(&wrong.iter().map(|r| r.entropy).collect::<Vec<_>>()),
    };
    write_json(&out.join("prediction_analysis.json"), &a)?;
    write_confusion(&out.join("confusion.csv"), &report, &space)?;
    Ok(format!("{} predictions, macro-F1 {:.4}, mean entropy {:.4}", a.n, a.macro_f1, a.mean_entropy))
}

fn analyze_features(rows: &[FeatureRow], bins: usize, out: &std::path::Path) -> Result<String, CliError> {
    let width = rows.first().map(|r| r.features.len()).unwrap_or(0);
    if rows.iter().any(|r| r.features.len() != width) {
        return Err(CliError::config("feature rows differ in width"));
    }
    if bins == 0 {
        return Err(CliError::config("bins must be positive"));
    }
    let names = feature_names(width);
    let labels: Vec<bool> = rows.iter().map(|r| r.label).collect();
    let label_num: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { 0.0 }).collect();
    let mut corr = Vec::with_capacity(width);
    for (k, name) in names.iter().enumerate() {
        let values: Vec<f64> = rows.iter().map(|r| r.features[k]).collect();
        let rho = match spearman(&values, &label_num) {
            Ok(r) => r.to_string(),
            Err(e) => {
                log::warn!("{name}: no correlation ({e})");
                String::new()
            }
        };
        corr.push(vec![name.clone(), rho]);

        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            log::warn!("{name}: constant feature; histogram skipped");
            continue;
        }
        let edges: Vec<f64> = (0..=bins).map(|b| if b == bins { hi } else { lo + (hi - lo) * b as f64 / bins as f64 }).collect();
        let bars = label_normalized_histogram(&values, &labels, &edges, &[true, false]).map_err(CliError::config)?;
        let hist: Vec<Vec<String>> = bars
            .iter()
            .map(|b| vec![b.bin_lo.to_string(), b.bin_hi.to_string(), b.label.to_string(), b.height.to_string()])
            .collect();
        write_csv(&out.join(format!("hist-{name}.csv")), &["bin_lo", "bin_hi", "label", "height"], &hist)?;
    }
    write_csv(&out.join("feature_correlations.csv"), &["feature", "spearman"], &corr)?;
    Ok(format!("{} feature rows, {width} features", rows.len()))
}

pub fn run(ctx: &Context) -> Result<String, CliError> {
    let a = &ctx.cfg.analyze;
    if a.predictions.is_none() && a.features.is_none() {
        return Err(CliError::config("analyze needs analyze.predictions or analyze.features"));
    }
    let out = ctx.out_dir()?;
    let mut parts = Vec::new();
    if let Some(p) = &a.predictions {
        parts.push(analyze_predictions(ctx, &read_jsonl(p)?, &out)?);
    }
    if let Some(f) = &a.features {
        parts.push(analyze_features(&read_jsonl(f)?, a.bins, &out)?);
    }
    Ok(format!("analyze: {}", parts.join("; ")))
}
