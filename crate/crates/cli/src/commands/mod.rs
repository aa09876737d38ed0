//! Subcommand implementations. Each returns the one-line summary printed on
//! success.

pub mod analyze;
pub mod bootstrap;
pub mod distractor;
pub mod icl;
pub mod labeldesc;
pub mod zero_shot;

use std::collections::BTreeMap;
use std::path::Path;

use promptlab_core::metrics::{mean_std, multiclass_report, score_entropy, MulticlassReport};
use promptlab_core::model::{LabelSpace, ScoreVector};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::runtime::{write_csv, write_json, write_jsonl};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub id: String,
    pub gold: String,
    pub pred: String,
    pub scores: Vec<f64>,
    pub entropy: f64,
}

impl PredictionRow {
    pub fn new(id: &str, gold: &str, pred: &str, scores: &ScoreVector) -> Self {
        Self {
            id: id.to_string(),
            gold: gold.to_string(),
            pred: pred.to_string(),
            scores: scores.as_slice().to_vec(),
            entropy: score_entropy(scores),
        }
    }
}

#[derive(Debug, Serialize)]
struct ReportFile<'a> {
    n: usize,
    accuracy: f64,
    macro_f1: f64,
    mean_entropy: f64,
    #[serde(flatten)]
    extra: &'a BTreeMap<String, f64>,
    per_label: &'a [promptlab_core::metrics::LabelReport],
}

/// Scalar metrics of one seed, keyed by name.
pub type SeedMetrics = BTreeMap<String, f64>;

pub fn evaluate(rows: &[PredictionRow], space: &LabelSpace) -> Result<MulticlassReport, CliError> {
    let idx = |s: &str| space.require(s).map_err(CliError::config);
    let preds = rows.iter().map(|r| idx(&r.pred)).collect::<Result<Vec<_>, _>>()?;
    let golds = rows.iter().map(|r| idx(&r.gold)).collect::<Result<Vec<_>, _>>()?;
    multiclass_report(&preds, &golds, space).map_err(CliError::config)
}

pub fn mean_entropy(rows: &[PredictionRow]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().map(|r| r.entropy).sum::<f64>() / rows.len() as f64
}

/// Writes predictions, report, confusion matrix and per-label table into
/// `dir` and returns the scalar metrics.
pub fn write_eval_bundle(
    dir: &Path,
    rows: &[PredictionRow],
    space: &LabelSpace,
    extra: BTreeMap<String, f64>,
) -> Result<SeedMetrics, CliError> {
    let report = evaluate(rows, space)?;
    let entropy = mean_entropy(rows);
    write_jsonl(&dir.join("predictions.jsonl"), rows)?;
    write_json(
        &dir.join("report.json"),
        &ReportFile {
            n: rows.len(),
            accuracy: report.accuracy,
            macro_f1: report.macro_f1,
            mean_entropy: entropy,
            extra: &extra,
            per_label: &report.per_label,
        },
    )?;
    write_confusion(&dir.join("confusion.csv"), &report, space)?;
    let per_label: Vec<Vec<String>> = report
        .per_label
        .iter()
        .map(|l| vec![l.label.clone(), l.precision.to_string(), l.recall.to_string(), l.f1.to_string(), l.support.to_string()])
        .collect();
    write_csv(&dir.join("per_label.csv"), &["label", "precision", "recall", "f1", "support"], &per_label)?;

    let mut metrics = extra;
    metrics.insert("accuracy".into(), report.accuracy);
    metrics.insert("macro_f1".into(), report.macro_f1);
    metrics.insert("mean_entropy".into(), entropy);
    Ok(metrics)
}

pub fn write_confusion(path: &Path, report: &MulticlassReport, space: &LabelSpace) -> Result<(), CliError> {
    let mut header = vec!["gold\\pred"];
    header.extend(space.ids());
    let rows: Vec<Vec<String>> = report
        .confusion
        .iter()
        .enumerate()
        .map(|(g, row)| std::iter::once(space.id(g).to_string()).chain(row.iter().map(|c| c.to_string())).collect())
        .collect();
    write_csv(path, &header, &rows)
}

#[derive(Debug, Serialize)]
struct MeanStd {
    mean: f64,
    std: f64,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    seeds: &'a [u64],
    metrics: BTreeMap<String, MeanStd>,
}

/// Writes `summary.json` with the mean and population std of every metric
/// across seeds.
pub fn write_summary(dir: &Path, seeds: &[u64], per_seed: &[SeedMetrics]) -> Result<BTreeMap<String, f64>, CliError> {
    let mut metrics = BTreeMap::new();
    let mut means = BTreeMap::new();
    if let Some(first) = per_seed.first() {
        for name in first.keys() {
            let values: Vec<f64> = per_seed.iter().filter_map(|m| m.get(name).copied()).collect();
            let (mean, std) = mean_std(&values);
            means.insert(name.clone(), mean);
            metrics.insert(name.clone(), MeanStd { mean, std });
        }
    }
    write_json(&dir.join("summary.json"), &Summary { seeds, metrics })?;
    Ok(means)
}

pub fn seed_dir(out: &Path, seed: u64) -> std::path::PathBuf {
    out.join(format!("seed-{seed}"))
}
