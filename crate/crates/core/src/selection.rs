//! Demonstration selection: retrieval, ambiguous label sets, constrained
//! selection with fallback, and demo ordering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::Gateway;
use crate::hash::fnv1a64;
use crate::metrics::score_entropy;
use crate::model::{Demonstration, LabelSpace, ScoreVector, TextExample};
use crate::prompting::{classify_with_prompt, zero_shot_classify, Pattern, PromptBundle, PromptError, Verbalizer};
use crate::rng::{seeded_shuffle, SplitMix64};

pub const DEFAULT_SEARCH_CAP: usize = 250;

#[derive(Debug, Error)]
pub enum SelectionError {
    #[error("dimension mismatch for {id}: expected {expected}, found {found}")]
    Dimension { id: String, expected: usize, found: usize },
    #[error("label space has {0} labels; need at least 2")]
    TooFewLabels(usize),
    #[error("{test_id}: requested {requested} demonstrations, found {found}")]
    Shortfall { test_id: String, requested: usize, found: usize },
    #[error("demonstration {0} has no zero-shot prediction")]
    Unannotated(String),
    #[error("demonstration {0} has no zero-shot scores")]
    MissingScores(String),
    #[error("strategy {0:?} does not select per test example")]
    UnsupportedStrategy(Strategy),
    #[error("no pool example has label {0}")]
    EmptyLabel(String),
    #[error("invalid selection config: {0}")]
    InvalidConfig(String),
    #[error("annotating {id}: {source}")]
    Annotation { id: String, source: PromptError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedEntry {
    pub demo: Demonstration,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedList {
    pub test_id: String,
    pub entries: Vec<RetrievedEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AmbigSet {
    pub first: String,
    pub second: String,
}

impl AmbigSet {
    pub fn contains(&self, label: &str) -> bool {
        self.first == label || self.second == label
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Retr,
    Gold,
    GoldMis,
    GoldMisPred,
    StaticN,
    Freq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemoOrdering {
    #[default]
    SeededShuffle,
    EntropyAscending,
}

fn default_search_cap() -> usize {
    DEFAULT_SEARCH_CAP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub n: usize,
    pub strategy: Strategy,
    #[serde(default = "default_search_cap")]
    pub search_cap: usize,
    #[serde(default)]
    pub ordering: DemoOrdering,
    #[serde(default)]
    pub seed: u64,
}

impl SelectionConfig {
    pub fn new(n: usize, strategy: Strategy) -> Self {
        Self { n, strategy, search_cap: DEFAULT_SEARCH_CAP, ordering: DemoOrdering::SeededShuffle, seed: 0 }
    }

    pub fn validate(&self) -> Result<(), SelectionError> {
        if self.search_cap < self.n {
            return Err(SelectionError::InvalidConfig(format!(
                "search_cap {} is smaller than n {}",
                self.search_cap, self.n
            )));
        }
        Ok(())
    }
}

/// Ranks pool entries by inner product with the test vector, descending,
/// ties by ascending pool id. Ranks are written back as 1-based positions.
pub fn rank_by_inner_product(
    test_id: &str,
    test_vec: &[f64],
    pool: &[(Demonstration, Vec<f64>)],
) -> Result<RetrievedList, SelectionError> {
    let mut entries = Vec::with_capacity(pool.len());
    for (demo, vec) in pool {
        if vec.len() != test_vec.len() {
            return Err(SelectionError::Dimension {
                id: demo.example.id.clone(),
                expected: test_vec.len(),
                found: vec.len(),
            });
        }
        let similarity = test_vec.iter().zip(vec).map(|(a, b)| a * b).sum();
        entries.push(RetrievedEntry { demo: demo.clone(), similarity });
    }
    entries.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.demo.example.id.cmp(&b.demo.example.id))
    });
    for (i, e) in entries.iter_mut().enumerate() {
        e.demo.retrieval_rank = i + 1;
    }
    Ok(RetrievedList { test_id: test_id.to_string(), entries })
}

/// [`rank_by_inner_product`] after dropping pool entries whose text equals
/// the test input.
pub fn retrieve(
    test: &TextExample,
    test_vec: &[f64],
    pool: &[(Demonstration, Vec<f64>)],
) -> Result<RetrievedList, SelectionError> {
    let kept: Vec<(Demonstration, Vec<f64>)> = pool
        .iter()
        .filter(|(d, _)| {
            let dup = d.example.text == test.text;
            if dup {
                log::info!("{}: dropping pool entry {} with identical text", test.id, d.example.id);
            }
            !dup
        })
        .cloned()
        .collect();
    rank_by_inner_product(&test.id, test_vec, &kept)
}

/// The two highest-scoring labels; ties go to the lower label index.
pub fn compute_ambig_set(sv: &ScoreVector, space: &LabelSpace) -> Result<AmbigSet, SelectionError> {
    if space.len() < 2 {
        return Err(SelectionError::TooFewLabels(space.len()));
    }
    if sv.len() != space.len() {
        return Err(SelectionError::Dimension { id: "scores".into(), expected: space.len(), found: sv.len() });
    }
    let s = sv.as_slice();
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
    Ok(AmbigSet { first: space.id(order[0]).to_string(), second: space.id(order[1]).to_string() })
}

/// How pool examples receive their zero-shot label.
#[derive(Debug, Clone, Copy)]
pub enum Annotator<'a> {
    Pattern { pattern: &'a Pattern, verbalizer: &'a Verbalizer },
    Icl { task_definition: &'a str },
}

/// Fills `zero_shot_prediction` and `zero_shot_scores` on every
/// demonstration. Gateway calls run with the gateway's concurrency bound.
pub fn annotate_pool(
    pool: Vec<Demonstration>,
    annotator: Annotator<'_>,
    space: &LabelSpace,
    gateway: &Gateway,
) -> Result<Vec<Demonstration>, SelectionError> {
    let results = gateway.map_bounded(&pool, |d| match annotator {
        Annotator::Pattern { pattern, verbalizer } => zero_shot_classify(&d.example, pattern, verbalizer, space, gateway),
        Annotator::Icl { task_definition } => {
            classify_with_prompt(&PromptBundle::zero_shot(task_definition, &d.example.text), space, gateway)
        }
    });
    pool.into_iter()
        .zip(results)
        .map(|(mut d, r)| {
            let pred = r.map_err(|source| SelectionError::Annotation { id: d.example.id.clone(), source })?;
            d.zero_shot_prediction = Some(pred.label);
            d.zero_shot_scores = Some(pred.scores);
            Ok(d)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    GoldMisPred,
    GoldMis,
    Gold,
    Retr,
}

impl Stage {
    fn chain_from(strategy: Strategy) -> Result<&'static [Stage], SelectionError> {
        const CHAIN: [Stage; 4] = [Stage::GoldMisPred, Stage::GoldMis, Stage::Gold, Stage::Retr];
        match strategy {
            Strategy::GoldMisPred => Ok(&CHAIN[0..]),
            Strategy::GoldMis => Ok(&CHAIN[1..]),
            Strategy::Gold => Ok(&CHAIN[2..]),
            Strategy::Retr => Ok(&CHAIN[3..]),
            other => Err(SelectionError::UnsupportedStrategy(other)),
        }
    }

    fn needs_prediction(self) -> bool {
        matches!(self, Stage::GoldMis | Stage::GoldMisPred)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageFill {
    pub stage: Stage,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackReport {
    pub test_id: String,
    pub strategy_requested: Strategy,
    pub stage_filled: Vec<StageFill>,
    /// Deepest 1-based retrieval position examined.
    pub scanned: usize,
}

impl FallbackReport {
    /// Last stage that contributed demonstrations.
    pub fn final_stage(&self) -> Option<Stage> {
        self.stage_filled.iter().rev().find(|s| s.count > 0).map(|s| s.stage)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedDemo {
    pub demo: Demonstration,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub demos: Vec<SelectedDemo>,
    pub report: FallbackReport,
}

impl Selection {
    pub fn demonstrations(&self) -> Vec<Demonstration> {
        self.demos.iter().map(|s| s.demo.clone()).collect()
    }
}

fn prediction(d: &Demonstration) -> Result<&str, SelectionError> {
    d.zero_shot_prediction.as_deref().ok_or_else(|| SelectionError::Unannotated(d.example.id.clone()))
}

/// Picks `cfg.n` demonstrations from the retrieved list, walking the
/// fallback chain from the requested strategy down to `retr`, then orders
/// them.
pub fn select_demos(cfg: &SelectionConfig, retrieved: &RetrievedList, ambig: &AmbigSet) -> Result<Selection, SelectionError> {
    cfg.validate()?;
    let chain = Stage::chain_from(cfg.strategy)?;
    let entries = &retrieved.entries;
    let mut taken = vec![false; entries.len()];
    let mut picked: Vec<(usize, Stage)> = Vec::with_capacity(cfg.n);
    let mut stage_filled = Vec::new();
    let mut scanned = 0usize;

    for &stage in chain {
        if picked.len() == cfg.n {
            break;
        }
        let before = picked.len();
        let mut mis_seen = 0usize;
        for (i, e) in entries.iter().enumerate() {
            if picked.len() == cfg.n {
                break;
            }
            let d = &e.demo;
            let keep = match stage {
                Stage::Retr => true,
                Stage::Gold => {
                    if i >= cfg.search_cap {
                        break;
                    }
                    ambig.contains(&d.gold_label)
                }
                Stage::GoldMis | Stage::GoldMisPred => {
                    let pred = prediction(d)?;
                    if pred == d.gold_label {
                        scanned = scanned.max(i + 1);
                        continue;
                    }
                    if mis_seen == cfg.search_cap {
                        break;
                    }
                    mis_seen += 1;
                    ambig.contains(&d.gold_label) && (stage == Stage::GoldMis || ambig.contains(pred))
                }
            };
            scanned = scanned.max(i + 1);
            if keep && !taken[i] {
                taken[i] = true;
                picked.push((i, stage));
            }
        }
        debug_assert!(!stage.needs_prediction() || picked[before..].iter().all(|(i, _)| entries[*i].demo.zero_shot_prediction.is_some()));
        stage_filled.push(StageFill { stage, count: picked.len() - before });
    }

    if picked.len() < cfg.n {
        return Err(SelectionError::Shortfall {
            test_id: retrieved.test_id.clone(),
            requested: cfg.n,
            found: picked.len(),
        });
    }

    let demos: Vec<Demonstration> = picked.iter().map(|(i, _)| entries[*i].demo.clone()).collect();
    let perm = order_permutation(&demos, cfg.ordering, ordering_seed(cfg.seed, &retrieved.test_id))?;
    let demos = perm
        .into_iter()
        .map(|k| SelectedDemo { demo: demos[k].clone(), stage: picked[k].1 })
        .collect();
    Ok(Selection {
        demos,
        report: FallbackReport {
            test_id: retrieved.test_id.clone(),
            strategy_requested: cfg.strategy,
            stage_filled,
            scanned,
        },
    })
}

/// Shuffle seed for one test example: the run seed mixed with the test id.
pub fn ordering_seed(seed: u64, test_id: &str) -> u64 {
    seed ^ fnv1a64(test_id.as_bytes())
}

fn order_permutation(demos: &[Demonstration], ordering: DemoOrdering, seed: u64) -> Result<Vec<usize>, SelectionError> {
    let idx: Vec<usize> = (0..demos.len()).collect();
    match ordering {
        DemoOrdering::SeededShuffle => Ok(seeded_shuffle(idx, seed)),
        DemoOrdering::EntropyAscending => {
            let entropies = demos
                .iter()
                .map(|d| {
                    d.zero_shot_scores
                        .as_ref()
                        .map(score_entropy)
                        .ok_or_else(|| SelectionError::MissingScores(d.example.id.clone()))
                })
                .collect::<Result<Vec<f64>, _>>()?;
            let mut idx = idx;
            idx.sort_by(|&a, &b| entropies[a].total_cmp(&entropies[b]));
            Ok(idx)
        }
    }
}

/// Reorders demonstrations by seeded shuffle or by ascending entropy of
/// their softmaxed zero-shot scores (stable).
pub fn order_demos(demos: Vec<Demonstration>, ordering: DemoOrdering, seed: u64) -> Result<Vec<Demonstration>, SelectionError> {
    let perm = order_permutation(&demos, ordering, seed)?;
    let mut slots: Vec<Option<Demonstration>> = demos.into_iter().map(Some).collect();
    Ok(perm.into_iter().map(|k| slots[k].take().expect("permutation")).collect())
}

/// One seeded pick per label, in label-space order.
pub fn select_static_n(pool: &[Demonstration], space: &LabelSpace, seed: u64) -> Result<Vec<Demonstration>, SelectionError> {
    space
        .ids()
        .enumerate()
        .map(|(li, label)| {
            let candidates: Vec<&Demonstration> = pool.iter().filter(|d| d.gold_label == label).collect();
            if candidates.is_empty() {
                return Err(SelectionError::EmptyLabel(label.to_string()));
            }
            let k = SplitMix64::stream(seed, li as u64).next_below(candidates.len());
            Ok(candidates[k].clone())
        })
        .collect()
}

/// Index of the most frequent label; ties go to the lower index.
pub fn freq_baseline(train_label_counts: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &c) in train_label_counts.iter().enumerate() {
        if best.is_none_or(|b| c > train_label_counts[b]) {
            best = Some(i);
        }
    }
    best
}

/// Label counts over `golds` in label-space order.
pub fn label_counts<S: AsRef<str>>(golds: &[S], space: &LabelSpace) -> Vec<usize> {
    let mut counts = vec![0; space.len()];
    for g in golds {
        if let Some(i) = space.index_of(g.as_ref()) {
            counts[i] += 1;
        }
    }
    counts
}
