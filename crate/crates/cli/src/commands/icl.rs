use std::collections::{BTreeMap, HashSet};

use promptlab_core::gateway::{EmbedRequest, Gateway};
use promptlab_core::metrics::{demo_gold_match_rate, gold_in_ambig_rate};
use promptlab_core::model::{Demonstration, LabelSpace, ScoreVector, TextExample};
use promptlab_core::prompting::{assemble_icl_prompt, classify_with_prompt, Prediction, PromptBundle};
use promptlab_core::selection::{
    annotate_pool, compute_ambig_set, freq_baseline, label_counts, order_demos, ordering_seed, retrieve, select_demos,
    select_static_n, AmbigSet, Annotator, DemoOrdering, FallbackReport, RetrievedList, SelectionConfig, SelectionError,
    Stage, Strategy,
};
use serde::Serialize;

use super::zero_shot::{predict_all, ZeroShotMode};
use super::{seed_dir, write_eval_bundle, write_summary, PredictionRow};
use crate::error::CliError;
use crate::runtime::{gold_indices, load_examples, write_jsonl, write_manifest, Context};

const EMBED_CHUNK: usize = 64;

/// Log-score given to non-majority labels by the frequency baseline.
const FREQ_OFF_SCORE: f64 = -1000.0;

pub fn embed_all(texts: &[String], gw: &Gateway) -> Result<Vec<Vec<f64>>, CliError> {
    let mut out = Vec::with_capacity(texts.len());
    for chunk in texts.chunks(EMBED_CHUNK) {
        out.extend(gw.embed_texts(&EmbedRequest { texts: chunk.to_vec() })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct DemoRecord {
    pub id: String,
    pub gold_label: String,
    pub retrieval_rank: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub zero_shot_prediction: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stage: Option<Stage>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionRecord {
    pub test_id: String,
    pub gold: String,
    pub ambig: AmbigSet,
    pub demos: Vec<DemoRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<FallbackReport>,
}

#[derive(Debug, Serialize)]
struct PromptRecord<'a> {
    id: &'a str,
    prompt: String,
}

/// Demonstrations chosen for one test example, with their stages when a
/// retrieval strategy picked them.
struct Chosen {
    demos: Vec<Demonstration>,
    stages: Option<Vec<Stage>>,
    report: Option<FallbackReport>,
}

fn demo_record(d: &Demonstration, stage: Option<Stage>) -> DemoRecord {
    DemoRecord {
        id: d.example.id.clone(),
        gold_label: d.gold_label.clone(),
        retrieval_rank: d.retrieval_rank,
        zero_shot_prediction: d.zero_shot_prediction.clone(),
        stage,
    }
}

/// Checks the selection constraints on one run's actual output. Returns one
/// message per violation.
fn verify_selection(
    cfg: &SelectionConfig,
    test: &TextExample,
    zero_shot: &ScoreVector,
    ambig: &AmbigSet,
    retrieved: Option<&RetrievedList>,
    chosen: &Chosen,
    space: &LabelSpace,
) -> Vec<String> {
    let mut bad = Vec::new();
    let id = &test.id;
    let argmax = zero_shot.argmax().map(|i| space.id(i));
    if argmax != Some(ambig.first.as_str()) {
        bad.push(format!("{id}: ambiguous set head {} is not the zero-shot argmax", ambig.first));
    }
    if ambig.first == ambig.second {
        bad.push(format!("{id}: ambiguous set repeats {}", ambig.first));
    }
    let expected = match cfg.strategy {
        Strategy::StaticN => space.len(),
        Strategy::Freq => 0,
        _ => cfg.n,
    };
    if chosen.demos.len() != expected {
        bad.push(format!("{id}: {} demonstrations, expected {expected}", chosen.demos.len()));
    }
    let mut seen = HashSet::new();
    for d in &chosen.demos {
        if !seen.insert(d.example.id.as_str()) {
            bad.push(format!("{id}: demonstration {} used twice", d.example.id));
        }
        if d.example.text == test.text {
            bad.push(format!("{id}: demonstration {} repeats the test input", d.example.id));
        }
    }
    if let (Some(stages), Some(report), Some(list)) = (&chosen.stages, &chosen.report, retrieved) {
        for (d, &stage) in chosen.demos.iter().zip(stages) {
            let did = &d.example.id;
            let pred = d.zero_shot_prediction.as_deref();
            if stage != Stage::Retr && !ambig.contains(&d.gold_label) {
                bad.push(format!("{id}: {did} in stage {stage:?} has gold {} outside the ambiguous set", d.gold_label));
            }
            if matches!(stage, Stage::GoldMis | Stage::GoldMisPred) && pred == Some(d.gold_label.as_str()) {
                bad.push(format!("{id}: {did} in stage {stage:?} is not misclassified"));
            }
            if stage == Stage::GoldMisPred && !pred.is_some_and(|p| ambig.contains(p)) {
                bad.push(format!("{id}: {did} prediction {pred:?} outside the ambiguous set"));
            }
        }
        for fill in &report.stage_filled {
            let n = stages.iter().filter(|&&s| s == fill.stage).count();
            if n != fill.count {
                bad.push(format!("{id}: report says {} from {:?}, found {n}", fill.count, fill.stage));
            }
        }
        for &stage in &[Stage::GoldMisPred, Stage::GoldMis, Stage::Gold, Stage::Retr] {
            let mut ranks: Vec<usize> = chosen
                .demos
                .iter()
                .zip(stages)
                .filter(|(_, &s)| s == stage)
                .map(|(d, _)| d.retrieval_rank)
                .collect();
            ranks.sort_unstable();
            if ranks.windows(2).any(|w| w[0] == w[1]) {
                bad.push(format!("{id}: duplicate retrieval rank in stage {stage:?}"));
            }
        }
        if report.scanned > list.entries.len() {
            bad.push(format!("{id}: scanned {} of {} entries", report.scanned, list.entries.len()));
        }
    }
    bad
}

pub fn run(ctx: &Context) -> Result<String, CliError> {
    let cfg = &ctx.cfg;
    cfg.validate()?;
    let sel = cfg.selection.clone().ok_or_else(|| CliError::config("selection is required for icl"))?;
    let space = cfg.label_space()?;
    let task_definition = cfg.task_definition()?;
    let pool_examples = load_examples(cfg.require_path(&cfg.train, "train")?, &space)?;
    let test = load_examples(cfg.require_path(&cfg.test, "test")?, &space)?;
    let golds: Vec<String> = gold_indices(&test, &space)?.into_iter().map(|g| space.id(g).to_string()).collect();
    let mode = ZeroShotMode::from_config(ctx, &space)?;
    let out = ctx.out_dir()?;
    let gw = ctx.gateway()?;

    let mut pool: Vec<Demonstration> = Vec::with_capacity(pool_examples.len());
    for ex in pool_examples {
        let id = ex.id.clone();
        match Demonstration::from_example(ex, 0) {
            Some(d) => pool.push(d),
            None => log::warn!("pool example {id} has no label; skipped"),
        }
    }

    let needs_annotation =
        matches!(sel.strategy, Strategy::GoldMis | Strategy::GoldMisPred) || sel.ordering == DemoOrdering::EntropyAscending;
    if needs_annotation {
        let annotator = match &mode {
            ZeroShotMode::Pattern { pattern, verbalizer } => Annotator::Pattern { pattern, verbalizer },
            ZeroShotMode::Prompt { task_definition } => Annotator::Icl { task_definition },
        };
        pool = annotate_pool(pool, annotator, &space, &gw)?;
    }

    let test_preds = predict_all(&mode, &test, &space, &gw)?;
    let ambig: Vec<AmbigSet> =
        test_preds.iter().map(|p| compute_ambig_set(&p.scores, &space)).collect::<Result<_, _>>()?;

    let uses_retrieval = matches!(sel.strategy, Strategy::Retr | Strategy::Gold | Strategy::GoldMis | Strategy::GoldMisPred);
    let retrieved: Vec<RetrievedList> = if uses_retrieval {
        let pool_texts: Vec<String> = pool.iter().map(|d| d.example.text.clone()).collect();
        let test_texts: Vec<String> = test.iter().map(|x| x.text.clone()).collect();
        let pool_vecs = embed_all(&pool_texts, &gw)?;
        let test_vecs = embed_all(&test_texts, &gw)?;
        let indexed: Vec<(Demonstration, Vec<f64>)> = pool.iter().cloned().zip(pool_vecs).collect();
        test.iter().zip(&test_vecs).map(|(x, v)| retrieve(x, v, &indexed)).collect::<Result<_, _>>()?
    } else {
        Vec::new()
    };

    let pool_golds: Vec<&str> = pool.iter().map(|d| d.gold_label.as_str()).collect();
    let majority = freq_baseline(&label_counts(&pool_golds, &space));

    let mut per_seed = Vec::with_capacity(cfg.seeds.len());
    let mut violations = Vec::new();
    for &seed in &cfg.seeds {
        let seed_cfg = SelectionConfig { seed, ..sel.clone() };
        let static_demos = match sel.strategy {
            Strategy::StaticN => Some(select_static_n(&pool, &space, seed)?),
            _ => None,
        };

        let mut chosen = Vec::with_capacity(test.len());
        let mut shortfalls = Vec::new();
        for (i, x) in test.iter().enumerate() {
            let c = match sel.strategy {
                Strategy::Freq => Chosen { demos: Vec::new(), stages: None, report: None },
                Strategy::StaticN => {
                    let demos = static_demos.clone().expect("static demos");
                    Chosen { demos: order_demos(demos, sel.ordering, ordering_seed(seed, &x.id))?, stages: None, report: None }
                }
                _ => match select_demos(&seed_cfg, &retrieved[i], &ambig[i]) {
                    Ok(s) => Chosen {
                        stages: Some(s.demos.iter().map(|d| d.stage).collect()),
                        demos: s.demonstrations(),
                        report: Some(s.report),
                    },
                    Err(SelectionError::Shortfall { test_id, requested, found }) => {
                        shortfalls.push(format!("{test_id} ({found}/{requested})"));
                        continue;
                    }
                    Err(e) => return Err(e.into()),
                },
            };
            chosen.push(c);
        }
        if !shortfalls.is_empty() {
            return Err(CliError::config(format!(
                "selection shortfall for {} test examples: {}",
                shortfalls.len(),
                shortfalls.join(", ")
            )));
        }
        if ctx.verify {
            for (i, x) in test.iter().enumerate() {
                violations.extend(
                    verify_selection(&seed_cfg, x, &test_preds[i].scores, &ambig[i], retrieved.get(i), &chosen[i], &space)
                        .into_iter()
                        .map(|v| format!("seed {seed}: {v}")),
                );
            }
        }

        let bundles: Vec<PromptBundle> = test
            .iter()
            .zip(&chosen)
            .map(|(x, c)| PromptBundle {
                task_definition: task_definition.clone(),
                demonstrations: c.demos.clone(),
                test_text: x.text.clone(),
            })
            .collect();
        let preds: Vec<Prediction> = match (sel.strategy, majority) {
            (Strategy::Freq, Some(m)) => {
                let scores: Vec<f64> = (0..space.len()).map(|k| if k == m { 0.0 } else { FREQ_OFF_SCORE }).collect();
                let p = Prediction::from_scores(scores, &space).map_err(CliError::config)?;
                vec![p; test.len()]
            }
            (Strategy::Freq, None) => return Err(CliError::config("frequency baseline needs a labelled pool")),
            _ => gw
                .map_bounded(&bundles, |b| classify_with_prompt(b, &space, &gw))
                .into_iter()
                .collect::<Result<_, _>>()?,
        };

        let rows: Vec<PredictionRow> = test
            .iter()
            .zip(&preds)
            .zip(&golds)
            .map(|((x, p), g)| PredictionRow::new(&x.id, g, &p.label, &p.scores))
            .collect();
        let selections: Vec<SelectionRecord> = test
            .iter()
            .zip(&chosen)
            .zip(&ambig)
            .zip(&golds)
            .map(|(((x, c), a), g)| SelectionRecord {
                test_id: x.id.clone(),
                gold: g.clone(),
                ambig: a.clone(),
                demos: match &c.stages {
                    Some(st) => c.demos.iter().zip(st).map(|(d, &s)| demo_record(d, Some(s))).collect(),
                    None => c.demos.iter().map(|d| demo_record(d, None)).collect(),
                },
                report: c.report.clone(),
            })
            .collect();
        let prompts: Vec<PromptRecord> = if sel.strategy == Strategy::Freq {
            Vec::new()
        } else {
            test.iter().zip(&bundles).map(|(x, b)| PromptRecord { id: &x.id, prompt: assemble_icl_prompt(b, &space) }).collect()
        };

        let demo_labels: Vec<Vec<String>> = chosen.iter().map(|c| c.demos.iter().map(|d| d.gold_label.clone()).collect()).collect();
        let mut extra = BTreeMap::new();
        extra.insert("gold_in_ambig_rate".to_string(), gold_in_ambig_rate(&ambig, &golds).map_err(CliError::config)?);
        extra.insert("demo_gold_match_rate".to_string(), demo_gold_match_rate(&demo_labels, &golds).map_err(CliError::config)?);

        let dir = seed_dir(&out, seed);
        per_seed.push(write_eval_bundle(&dir, &rows, &space, extra)?);
        write_jsonl(&dir.join("selections.jsonl"), &selections)?;
        write_jsonl(&dir.join("prompts.jsonl"), &prompts)?;
    }

    let means = write_summary(&out, &cfg.seeds, &per_seed)?;
    write_manifest(&out, "icl", cfg, gw.backend_id())?;
    if !violations.is_empty() {
        return Err(CliError::Verify(violations));
    }
    Ok(format!(
        "icl: {} test examples, pool {}, strategy {:?}, {} seeds, macro-F1 {:.4}, gold-in-ambig {:.1}%, demo gold match {:.1}%",
        test.len(),
        pool.len(),
        sel.strategy,
        cfg.seeds.len(),
        means["macro_f1"],
        means["gold_in_ambig_rate"],
        means["demo_gold_match_rate"]
    ))
}
