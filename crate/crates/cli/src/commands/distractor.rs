use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use promptlab_core::distractor::{
    extract_all, load_model, rank_candidates, save_model, score_candidates, train_mlp, tune_threshold, Candidate,
    FeatureVector, FrequencyTable,
};
use promptlab_core::gateway::{load_word_vectors, Gateway, WordVectors};
use promptlab_core::metrics::{aupr, prf1_binary, Prf1};
use promptlab_core::model::{parse_cloze, ClozeInstance};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::runtime::{write_csv, write_json, write_jsonl, write_manifest, Context};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub id: String,
    pub question: String,
    pub distractor: String,
    pub label: bool,
    pub features: Vec<f64>,
    pub oov_head: bool,
    pub oov_infl: bool,
}

struct Resources {
    vectors: WordVectors,
    table: FrequencyTable,
    gateway: Option<Gateway>,
}

impl Resources {
    fn load(ctx: &Context) -> Result<Self, CliError> {
        let cfg = &ctx.cfg;
        let path = cfg.require_path(&cfg.vectors, "vectors")?;
        let vectors = load_word_vectors(path).map_err(CliError::config)?;
        let table = FrequencyTable::from_vectors(&vectors);
        let gateway = if cfg.features.contextual { Some(ctx.gateway()?) } else { None };
        Ok(Self { vectors, table, gateway })
    }

    fn features(&self, ctx: &Context, instances: &[ClozeInstance]) -> Result<Vec<FeatureVector>, CliError> {
        Ok(extract_all(instances, &self.vectors, &self.table, &ctx.cfg.features, self.gateway.as_ref())?)
    }

    fn backend_id(&self) -> String {
        self.gateway.as_ref().map(Gateway::backend_id).unwrap_or_else(|| "none".into())
    }
}

fn load_split(path: &Path) -> Result<Vec<ClozeInstance>, CliError> {
    let v = parse_cloze(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    if v.is_empty() {
        return Err(CliError::config(format!("{} has no instances", path.display())));
    }
    Ok(v)
}

fn splits(ctx: &Context) -> Vec<(&'static str, &Path)> {
    let cfg = &ctx.cfg;
    [("train", &cfg.train), ("dev", &cfg.dev), ("test", &cfg.test)]
        .into_iter()
        .filter_map(|(name, p)| p.as_deref().map(|p| (name, p)))
        .collect()
}

fn model_path(ctx: &Context, out: &Path) -> PathBuf {
    ctx.cfg.model.clone().unwrap_or_else(|| out.join("model.bin"))
}

pub fn extract(ctx: &Context) -> Result<String, CliError> {
    ctx.cfg.validate()?;
    let present = splits(ctx);
    if present.is_empty() {
        return Err(CliError::config("distractor-extract needs at least one of train, dev, test"));
    }
    let res = Resources::load(ctx)?;
    let out = ctx.out_dir()?;
    let mut counts = Vec::new();
    for (name, path) in present {
        let instances = load_split(path)?;
        let feats = res.features(ctx, &instances)?;
        let rows: Vec<FeatureRow> = instances
            .iter()
            .zip(&feats)
            .map(|(inst, f)| FeatureRow {
                id: inst.id.clone(),
                question: inst.question_key(),
                distractor: inst.distractor.inflected.clone(),
                label: inst.label,
                features: f.to_vec(),
                oov_head: f.oov_head,
                oov_infl: f.oov_infl,
            })
            .collect();
        let oov = feats.iter().filter(|f| f.oov_head || f.oov_infl).count();
        if oov > 0 {
            log::warn!("{name}: {oov} of {} instances have an out-of-vocabulary side", rows.len());
        }
        write_jsonl(&out.join(format!("features-{name}.jsonl")), &rows)?;
        counts.push(format!("{name} {}", rows.len()));
    }
    write_manifest(&out, "distractor-extract", &ctx.cfg, res.backend_id())?;
    Ok(format!("distractor-extract: {} (width {})", counts.join(", "), FeatureVector::width(&ctx.cfg.features)))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ThresholdFile {
    pub threshold: f64,
    /// Split the threshold was tuned on.
    pub tuned_on: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub aupr: Option<f64>,
}

pub fn train(ctx: &Context) -> Result<String, CliError> {
    let cfg = &ctx.cfg;
    cfg.validate()?;
    let train_set = load_split(cfg.require_path(&cfg.train, "train")?)?;
    let dev_set = cfg.dev.as_deref().map(load_split).transpose()?;
    let res = Resources::load(ctx)?;
    let out = ctx.out_dir()?;

    let xs: Vec<Vec<f64>> = res.features(ctx, &train_set)?.iter().map(FeatureVector::to_vec).collect();
    let ys: Vec<bool> = train_set.iter().map(|i| i.label).collect();
    let dev = match &dev_set {
        Some(d) => Some((res.features(ctx, d)?.iter().map(FeatureVector::to_vec).collect::<Vec<_>>(), d.iter().map(|i| i.label).collect::<Vec<_>>())),
        None => None,
    };
    let dev_ref = dev.as_ref().map(|(x, y)| (x.as_slice(), y.as_slice()));
    let (model, trace) = train_mlp(&xs, &ys, dev_ref, &cfg.training).map_err(CliError::config)?;

    let (tune_x, tune_y, tuned_on) = match &dev {
        Some((x, y)) => (x.as_slice(), y.as_slice(), "dev"),
        None => (xs.as_slice(), ys.as_slice(), "train"),
    };
    let scores = score_candidates(&model, tune_x).map_err(CliError::config)?;
    let threshold = tune_threshold(&scores, tune_y);
    let m = prf1_binary(&scores, tune_y, threshold).map_err(CliError::config)?;

    let path = model_path(ctx, &out);
    let file = File::create(&path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(file);
    save_model(&model, &mut w).and_then(|_| w.flush())?;
    write_json(&out.join("trace.json"), &trace)?;
    write_json(
        &out.join("threshold.json"),
        &ThresholdFile {
            threshold,
            tuned_on: tuned_on.into(),
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            aupr: aupr(&scores, tune_y).ok(),
        },
    )?;
    write_manifest(&out, "distractor-train", cfg, res.backend_id())?;
    Ok(format!(
        "distractor-train: {} instances, best epoch {} of {} ({:?} {:.4}), threshold {threshold} on {tuned_on} (F1 {:.4})",
        xs.len(),
        trace.best_epoch,
        trace.epochs.len(),
        cfg.training.tune_metric,
        trace.best_metric,
        m.f1
    ))
}

#[derive(Debug, Serialize)]
struct RankMetrics {
    n: usize,
    aupr: Option<f64>,
    threshold: Option<f64>,
    at_threshold: Option<Prf1>,
}

pub fn rank(ctx: &Context) -> Result<String, CliError> {
    let cfg = &ctx.cfg;
    cfg.validate()?;
    let test = load_split(cfg.require_path(&cfg.test, "test")?)?;
    let res = Resources::load(ctx)?;
    let out = ctx.out_dir()?;
    let path = model_path(ctx, &out);
    let file = File::open(&path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    let model = load_model(BufReader::new(file)).map_err(CliError::config)?;

    let xs: Vec<Vec<f64>> = res.features(ctx, &test)?.iter().map(FeatureVector::to_vec).collect();
    let scores = score_candidates(&model, &xs).map_err(CliError::config)?;
    let candidates: Vec<Candidate> = test.iter().map(Candidate::from).collect();
    let ranked = rank_candidates(&candidates, &scores);
    let rows: Vec<Vec<String>> = ranked
        .iter()
        .map(|r| {
            vec![
                r.instance_id.clone(),
                r.distractor.clone(),
                r.raw_score.to_string(),
                r.normalized_score.to_string(),
                r.rank.to_string(),
                r.gold_label.to_string(),
            ]
        })
        .collect();
    write_csv(
        &out.join("ranked.csv"),
        &["instance_id", "distractor", "raw_score", "normalized_score", "rank", "gold_label"],
        &rows,
    )?;

    let labels: Vec<bool> = test.iter().map(|i| i.label).collect();
    let threshold = std::fs::read_to_string(out.join("threshold.json"))
        .ok()
        .and_then(|raw| serde_json::from_str::<ThresholdFile>(&raw).ok())
        .map(|t| t.threshold);
    let metrics = RankMetrics {
        n: test.len(),
        aupr: aupr(&scores, &labels).ok(),
        threshold,
        at_threshold: threshold.and_then(|t| prf1_binary(&scores, &labels, t).ok()),
    };
    write_json(&out.join("rank_metrics.json"), &metrics)?;
    Ok(format!(
        "distractor-rank: {} candidates ranked -> {}{}",
        ranked.len(),
        out.join("ranked.csv").display(),
        metrics.aupr.map(|a| format!(", AUPR {a:.4}")).unwrap_or_default()
    ))
}
