use std::collections::HashMap;
use std::path::Path;

use promptlab_core::metrics::{paired_bootstrap, BootstrapMetric, BootstrapResult};
use promptlab_core::model::LabelSpace;
use serde::Serialize;

use super::PredictionRow;
use crate::config::BootstrapMetricName;
use crate::error::CliError;
use crate::runtime::{read_jsonl, write_json, Context};

#[derive(Debug, Serialize)]
struct BootstrapFile {
    n: usize,
    resamples: usize,
    seed: u64,
    metric: BootstrapMetric,
    #[serde(flatten)]
    result: BootstrapResult,
}

fn indices(rows: &[PredictionRow], space: &LabelSpace, path: &Path) -> Result<HashMap<String, (usize, usize)>, CliError> {
    let mut out = HashMap::with_capacity(rows.len());
    for r in rows {
        let g = space.require(&r.gold).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let p = space.require(&r.pred).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if out.insert(r.id.clone(), (g, p)).is_some() {
            return Err(CliError::config(format!("{}: duplicate id {}", path.display(), r.id)));
        }
    }
    Ok(out)
}

pub fn run(ctx: &Context) -> Result<String, CliError> {
    let cfg = &ctx.cfg;
    cfg.validate()?;
    let b = &cfg.bootstrap;
    let a_path = cfg.require_path(&b.a, "bootstrap.a")?;
    let b_path = cfg.require_path(&b.b, "bootstrap.b")?;
    let space = cfg.label_space()?;
    let rows_a: Vec<PredictionRow> = read_jsonl(a_path)?;
    let rows_b: Vec<PredictionRow> = read_jsonl(b_path)?;
    let map_b = indices(&rows_b, &space, b_path)?;
    indices(&rows_a, &space, a_path)?;
    if rows_a.len() != rows_b.len() {
        return Err(CliError::config(format!("{} has {} rows, {} has {}", a_path.display(), rows_a.len(), b_path.display(), rows_b.len())));
    }

    // Pair by id in the order of system A.
    let (mut golds, mut pa, mut pb) = (Vec::new(), Vec::new(), Vec::new());
    for r in &rows_a {
        let (gb, predb) = *map_b.get(&r.id).ok_or_else(|| CliError::config(format!("{} missing from {}", r.id, b_path.display())))?;
        let g = space.require(&r.gold).map_err(CliError::config)?;
        if g != gb {
            return Err(CliError::config(format!("{}: gold labels differ between systems", r.id)));
        }
        golds.push(g);
        pa.push(space.require(&r.pred).map_err(CliError::config)?);
        pb.push(predb);
    }

    let metric = match b.metric {
        BootstrapMetricName::MacroF1 => BootstrapMetric::MacroF1 { num_labels: space.len() },
        BootstrapMetricName::BinaryF1 => {
            let pos = b.positive.as_deref().ok_or_else(|| CliError::config("binary_f1 needs bootstrap.positive"))?;
            BootstrapMetric::BinaryF1 { positive: space.require(pos).map_err(CliError::config)? }
        }
    };
    let seed = cfg.seeds[0];
    let result = paired_bootstrap(&golds, &pa, &pb, metric, b.resamples, seed).map_err(CliError::config)?;
    let p = result.p_value;
    write_json(
        &ctx.out_dir()?.join("bootstrap.json"),
        &BootstrapFile { n: golds.len(), resamples: b.resamples, seed, metric, result },
    )?;
    Ok(format!("bootstrap: n={} R={} p = {p}", golds.len(), b.resamples))
}
