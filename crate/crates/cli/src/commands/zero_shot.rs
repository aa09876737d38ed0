use std::collections::BTreeMap;

use promptlab_core::gateway::Gateway;
use promptlab_core::model::{LabelSpace, TextExample};
use promptlab_core::prompting::{
    classify_with_prompt, find_pattern, zero_shot_classify, Pattern, Prediction, PromptBundle, PromptError, Verbalizer,
};

use super::{seed_dir, write_eval_bundle, write_summary, PredictionRow};
use crate::error::CliError;
use crate::runtime::{gold_indices, load_examples, write_manifest, Context};

/// How test inputs are classified without demonstrations.
pub enum ZeroShotMode {
    Pattern { pattern: Pattern, verbalizer: Verbalizer },
    Prompt { task_definition: String },
}

impl ZeroShotMode {
    /// Pattern mode when the config names a pattern, instruction-prompt mode
    /// otherwise.
    pub fn from_config(ctx: &Context, space: &LabelSpace) -> Result<Self, CliError> {
        let cfg = &ctx.cfg;
        match &cfg.pattern {
            Some(id) => {
                let pattern = find_pattern(id)?;
                let verbalizer = match &cfg.verbalizer {
                    Some(set) => Verbalizer::fixture(set, space)?,
                    None => match Verbalizer::from_space(space) {
                        Ok(v) => v,
                        Err(_) => Verbalizer::fixture(cfg.task()?, space)?,
                    },
                };
                Ok(ZeroShotMode::Pattern { pattern, verbalizer })
            }
            None => Ok(ZeroShotMode::Prompt { task_definition: cfg.task_definition()? }),
        }
    }

    pub fn classify(&self, x: &TextExample, space: &LabelSpace, gw: &Gateway) -> Result<Prediction, PromptError> {
        match self {
            ZeroShotMode::Pattern { pattern, verbalizer } => zero_shot_classify(x, pattern, verbalizer, space, gw),
            ZeroShotMode::Prompt { task_definition } => {
                classify_with_prompt(&PromptBundle::zero_shot(task_definition, &x.text), space, gw)
            }
        }
    }
}

/// Predictions for every example, in input order.
pub fn predict_all(
    mode: &ZeroShotMode,
    examples: &[TextExample],
    space: &LabelSpace,
    gw: &Gateway,
) -> Result<Vec<Prediction>, CliError> {
    gw.map_bounded(examples, |x| mode.classify(x, space, gw))
        .into_iter()
        .zip(examples)
        .map(|(r, x)| {
            r.map_err(|e| match CliError::from(e) {
                CliError::Backend(m) => CliError::Backend(format!("{}: {m}", x.id)),
                other => other,
            })
        })
        .collect()
}

pub fn run(ctx: &Context) -> Result<String, CliError> {
    let cfg = &ctx.cfg;
    cfg.validate()?;
    let space = cfg.label_space()?;
    let mode = ZeroShotMode::from_config(ctx, &space)?;
    let test = load_examples(cfg.require_path(&cfg.test, "test")?, &space)?;
    gold_indices(&test, &space)?;
    let out = ctx.out_dir()?;
    let gw = ctx.gateway()?;

    // No step of zero-shot classification consumes the seed, so one pass
    // serves every seed directory.
    let preds = predict_all(&mode, &test, &space, &gw)?;
    let rows: Vec<PredictionRow> = test
        .iter()
        .zip(&preds)
        .map(|(x, p)| PredictionRow::new(&x.id, x.gold_label.as_deref().unwrap_or_default(), &p.label, &p.scores))
        .collect();

    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        per_seed.push(write_eval_bundle(&seed_dir(&out, seed), &rows, &space, BTreeMap::new())?);
    }
    let means = write_summary(&out, &cfg.seeds, &per_seed)?;
    write_manifest(&out, "zero-shot", cfg, gw.backend_id())?;
    Ok(format!(
        "zero-shot: {} examples, {} seeds, accuracy {:.4}, macro-F1 {:.4}, mean entropy {:.4}",
        test.len(),
        cfg.seeds.len(),
        means["accuracy"],
        means["macro_f1"],
        means["mean_entropy"]
    ))
}
