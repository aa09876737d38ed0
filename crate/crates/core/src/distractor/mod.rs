//! Distractor features, the feed-forward scorer, and ranked output.

mod mlp;

pub use mlp::{
    load_model, save_model, score_candidates, train_mlp, EpochRecord, Gradients, MlpError, MlpModel, TrainConfig,
    TrainTrace, TuneMetric,
};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::gateway::{candidate_units, Gateway, GatewayError, MaskFillRequest, WordVectors, MASK};
use crate::metrics::prf1_binary;
use crate::model::{ClozeInstance, BLANK};

/// Token frequency ranks; unknown tokens rank `n + 1`.
#[derive(Debug, Clone, Default)]
pub struct FrequencyTable {
    ranks: HashMap<String, usize>,
    n: usize,
}

impl FrequencyTable {
    pub fn from_ranked<S: Into<String>>(tokens: impl IntoIterator<Item = S>) -> Self {
        let mut ranks = HashMap::new();
        let mut n = 0;
        for t in tokens {
            n += 1;
            ranks.entry(t.into()).or_insert(n);
        }
        Self { ranks, n }
    }

    pub fn from_vectors(v: &WordVectors) -> Self {
        Self { ranks: v.ranks().clone(), n: v.size() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rank(&self, token: &str) -> usize {
        self.ranks
            .get(token)
            .or_else(|| self.ranks.get(&token.to_lowercase()))
            .copied()
            .unwrap_or(self.n + 1)
    }

    /// Rank of the rarest word of a phrase.
    pub fn phrase_rank(&self, phrase: &str) -> usize {
        phrase.split_whitespace().map(|w| self.rank(w)).max().unwrap_or(self.n + 1)
    }
}

/// Character length difference, whitespace included.
pub fn length_difference(c: &str, d: &str) -> usize {
    c.chars().count().abs_diff(d.chars().count())
}

fn mean_vector(text: &str, vectors: &WordVectors) -> Option<Vec<f64>> {
    let found: Vec<&[f64]> = text.split_whitespace().filter_map(|w| vectors.vector(w)).collect();
    if found.is_empty() {
        return None;
    }
    let mut mean = vec![0.0; found[0].len()];
    for v in &found {
        for (m, x) in mean.iter_mut().zip(v.iter()) {
            *m += x;
        }
    }
    let k = found.len() as f64;
    mean.iter_mut().for_each(|m| *m /= k);
    Some(mean)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        (dot / (na * nb)).clamp(-1.0, 1.0)
    }
}

/// Cosine of mean word vectors plus a flag set when a side has no known
/// word (the similarity is then 0).
pub fn embedding_similarity(c: &str, d: &str, vectors: &WordVectors) -> (f64, bool) {
    match (mean_vector(c, vectors), mean_vector(d, vectors)) {
        (Some(a), Some(b)) => (cosine(&a, &b), false),
        _ => (0.0, true),
    }
}

/// `-ln(rank)` of the rarest word.
pub fn distractor_frequency(d: &str, table: &FrequencyTable) -> f64 {
    -(table.phrase_rank(d) as f64).ln()
}

/// `ln(1 + |r_c - r_d|)` over phrase ranks.
pub fn rank_difference(c: &str, d: &str, table: &FrequencyTable) -> f64 {
    (1.0 + table.phrase_rank(c).abs_diff(table.phrase_rank(d)) as f64).ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Distractor,
    Correct,
}

/// Mean, min and max of per-unit log-probabilities, then of per-unit log
/// ranks. Each unit of the candidate is masked with the others filled in.
pub fn contextual_features(instance: &ClozeInstance, side: Side, gateway: &Gateway) -> Result<[f64; 6], GatewayError> {
    let candidate = match side {
        Side::Distractor => &instance.distractor.inflected,
        Side::Correct => &instance.correct.inflected,
    };
    let units = candidate_units(candidate);
    if units.is_empty() {
        return Err(GatewayError::Precondition(format!("{}: empty candidate", instance.id)));
    }
    let mut lps = Vec::with_capacity(units.len());
    let mut lrs = Vec::with_capacity(units.len());
    for i in 0..units.len() {
        let filled: Vec<&str> = units.iter().enumerate().map(|(j, u)| if i == j { MASK } else { u }).collect();
        let req = MaskFillRequest {
            text_with_mask: instance.context.replacen(BLANK, &filled.join(" "), 1),
            candidates: vec![units[i].to_string()],
        };
        let resp = gateway.mask_fill(&req)?;
        lps.push(resp.log_probs[0]);
        lrs.push((resp.ranks[0] as f64).ln());
    }
    let [a, b, c] = pool3(&lps);
    let [d, e, f] = pool3(&lrs);
    Ok([a, b, c, d, e, f])
}

fn pool3(v: &[f64]) -> [f64; 3] {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    [mean, min, max]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureConfig {
    #[serde(default)]
    pub contextual: bool,
    /// Also append the correct answer's contextual block.
    #[serde(default)]
    pub include_correct_context: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub len_diff: f64,
    pub cos_head: f64,
    pub cos_infl: f64,
    pub freq_head: f64,
    pub freq_infl: f64,
    pub rankdiff_head: f64,
    pub rankdiff_infl: f64,
    pub ctx: Option<[f64; 6]>,
    pub ctx_correct: Option<[f64; 6]>,
    pub oov_head: bool,
    pub oov_infl: bool,
}

impl FeatureVector {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![
            self.len_diff,
            self.cos_head,
            self.cos_infl,
            self.freq_head,
            self.freq_infl,
            self.rankdiff_head,
            self.rankdiff_infl,
        ];
        v.extend(self.ctx.iter().flatten());
        v.extend(self.ctx_correct.iter().flatten());
        v
    }

    pub fn width(cfg: &FeatureConfig) -> usize {
        7 + if cfg.contextual { 6 } else { 0 } + if cfg.contextual && cfg.include_correct_context { 6 } else { 0 }
    }
}

/// Static features only; no gateway involved.
pub fn static_features(inst: &ClozeInstance, vectors: &WordVectors, table: &FrequencyTable) -> FeatureVector {
    let (c, d) = (&inst.correct, &inst.distractor);
    let (cos_head, oov_head) = embedding_similarity(&c.headword, &d.headword, vectors);
    let (cos_infl, oov_infl) = embedding_similarity(&c.inflected, &d.inflected, vectors);
    FeatureVector {
        len_diff: length_difference(&c.inflected, &d.inflected) as f64,
        cos_head,
        cos_infl,
        freq_head: distractor_frequency(&d.headword, table),
        freq_infl: distractor_frequency(&d.inflected, table),
        rankdiff_head: rank_difference(&c.headword, &d.headword, table),
        rankdiff_infl: rank_difference(&c.inflected, &d.inflected, table),
        ctx: None,
        ctx_correct: None,
        oov_head,
        oov_infl,
    }
}

pub fn extract_features(
    inst: &ClozeInstance,
    vectors: &WordVectors,
    table: &FrequencyTable,
    cfg: &FeatureConfig,
    gateway: Option<&Gateway>,
) -> Result<FeatureVector, GatewayError> {
    let mut fv = static_features(inst, vectors, table);
    if cfg.contextual {
        let gw = gateway.ok_or_else(|| GatewayError::Precondition("contextual features need a gateway".into()))?;
        fv.ctx = Some(contextual_features(inst, Side::Distractor, gw)?);
        if cfg.include_correct_context {
            fv.ctx_correct = Some(contextual_features(inst, Side::Correct, gw)?);
        }
    }
    Ok(fv)
}

/// Features for many instances, with gateway calls fanned out under the
/// gateway's concurrency bound. Output order follows input order.
pub fn extract_all(
    instances: &[ClozeInstance],
    vectors: &WordVectors,
    table: &FrequencyTable,
    cfg: &FeatureConfig,
    gateway: Option<&Gateway>,
) -> Result<Vec<FeatureVector>, GatewayError> {
    let run = |inst: &ClozeInstance| extract_features(inst, vectors, table, cfg, gateway);
    match gateway {
        Some(gw) if cfg.contextual => gw.map_bounded(instances, run).into_iter().collect(),
        _ => instances.iter().map(run).collect(),
    }
}

const THRESHOLD_GRID: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Grid threshold with the best F1; ties go to the lowest threshold.
pub fn tune_threshold(scores: &[f64], labels: &[bool]) -> f64 {
    let mut best = (THRESHOLD_GRID[0], f64::NEG_INFINITY);
    for t in THRESHOLD_GRID {
        let f1 = prf1_binary(scores, labels, t).map(|m| m.f1).unwrap_or(0.0);
        if f1 > best.1 {
            best = (t, f1);
        }
    }
    best.0
}

/// `(x - min) / (max - min)`; a constant input maps to zeros.
pub fn normalize_scores_minmax(scores: &[f64]) -> Vec<f64> {
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(max > min) {
        return vec![0.0; scores.len()];
    }
    scores.iter().map(|s| (s - min) / (max - min)).collect()
}

/// What ranking needs to know about one candidate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub instance_id: String,
    /// Candidates sharing this key belong to the same question.
    pub question: String,
    pub distractor: String,
    pub gold_label: bool,
}

impl From<&ClozeInstance> for Candidate {
    fn from(inst: &ClozeInstance) -> Self {
        Self {
            instance_id: inst.id.clone(),
            question: inst.question_key(),
            distractor: inst.distractor.inflected.clone(),
            gold_label: inst.label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedRow {
    pub instance_id: String,
    pub distractor: String,
    pub raw_score: f64,
    pub normalized_score: f64,
    pub rank: usize,
    pub gold_label: bool,
}

/// Ranks candidates within each question, best first. Normalization is also
/// per question. Questions keep their first-appearance order.
pub fn rank_candidates(candidates: &[Candidate], scores: &[f64]) -> Vec<RankedRow> {
    assert_eq!(candidates.len(), scores.len(), "one score per candidate");
    let mut groups: Vec<(&str, Vec<usize>)> = Vec::new();
    for (i, c) in candidates.iter().enumerate() {
        match groups.iter_mut().find(|(k, _)| *k == c.question) {
            Some((_, members)) => members.push(i),
            None => groups.push((&c.question, vec![i])),
        }
    }
    let mut out = Vec::with_capacity(candidates.len());
    for (_, mut members) in groups {
        members.sort_by(|&a, &b| {
            scores[b].total_cmp(&scores[a]).then_with(|| candidates[a].instance_id.cmp(&candidates[b].instance_id))
        });
        let raw: Vec<f64> = members.iter().map(|&i| scores[i]).collect();
        let norm = normalize_scores_minmax(&raw);
        for (r, (&i, n)) in members.iter().zip(norm).enumerate() {
            let c = &candidates[i];
            out.push(RankedRow {
                instance_id: c.instance_id.clone(),
                distractor: c.distractor.clone(),
                raw_score: scores[i],
                normalized_score: n,
                rank: r + 1,
                gold_label: c.gold_label,
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{Backend, EmbedRequest, EmbedResponse, MaskFillResponse, ScoreRequest, ScoreResponse};
    use crate::model::WordForm;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::sync::{Arc, Mutex};

    fn wv(entries: &[(&str, Vec<f64>)]) -> WordVectors {
        WordVectors::from_entries(entries.iter().map(|(t, v)| (t.to_string(), v.clone()))).unwrap()
    }

    fn inst(id: &str, ctx: &str, correct: &str, distractor: &str, label: bool) -> ClozeInstance {
        ClozeInstance {
            id: id.into(),
            context: ctx.into(),
            long_context: None,
            correct: WordForm { headword: correct.into(), inflected: correct.into() },
            distractor: WordForm { headword: distractor.into(), inflected: distractor.into() },
            label,
        }
    }

    #[test]
    fn length_examples() {
        assert_eq!(length_difference("attend", "contribute"), 4);
        assert_eq!(length_difference("notify", "notify"), 0);
        assert_eq!(length_difference("notify", "more recently"), 7);
    }

    #[test]
    fn similarity_examples() {
        let v = wv(&[("x", vec![1.0, 0.0]), ("y", vec![0.0, 1.0]), ("z", vec![1.0, 1.0])]);
        assert_abs_diff_eq!(embedding_similarity("x", "x", &v).0, 1.0, epsilon = 1e-12);
        assert_eq!(embedding_similarity("x", "y", &v), (0.0, false));
        assert_abs_diff_eq!(embedding_similarity("x y", "z", &v).0, 1.0, epsilon = 1e-12);
        assert_eq!(embedding_similarity("qq", "z", &v), (0.0, true));
    }

    #[test]
    fn frequency_examples() {
        let table = FrequencyTable::from_ranked((1..=500).map(|i| format!("w{i}")));
        assert_eq!(distractor_frequency("w1", &table), 0.0);
        assert_abs_diff_eq!(distractor_frequency("w10 w500", &table), -(500f64).ln());
        let big = FrequencyTable { ranks: HashMap::new(), n: 400_000 };
        assert_abs_diff_eq!(distractor_frequency("oov", &big), -(400_001f64).ln());
    }

    #[test]
    fn rank_difference_examples() {
        let table = FrequencyTable::from_ranked((1..=200).map(|i| format!("w{i}")));
        assert_eq!(rank_difference("w7", "w7", &table), 0.0);
        assert_abs_diff_eq!(rank_difference("w100", "w200", &table), 101f64.ln());
        assert_abs_diff_eq!(rank_difference("w100", "w200", &table), 4.6151, epsilon = 1e-4);
        let small = FrequencyTable::from_ranked((1..=100).map(|i| format!("w{i}")));
        assert_abs_diff_eq!(rank_difference("w5", "unknown", &small), 97f64.ln());
    }

    /// Mask-fill stub keyed by candidate: (log-prob, rank).
    struct Table(HashMap<String, (f64, u64)>, Mutex<Vec<String>>);

    impl Backend for Table {
        fn id(&self) -> String {
            "table".into()
        }
        fn score(&self, _: &ScoreRequest) -> Result<ScoreResponse, GatewayError> {
            unimplemented!()
        }
        fn mask_fill(&self, req: &MaskFillRequest) -> Result<MaskFillResponse, GatewayError> {
            self.1.lock().unwrap().push(req.text_with_mask.clone());
            let (lp, r) = self.0[&req.candidates[0]];
            Ok(MaskFillResponse { log_probs: vec![lp], ranks: vec![r] })
        }
        fn embed(&self, _: &EmbedRequest) -> Result<EmbedResponse, GatewayError> {
            unimplemented!()
        }
    }

    fn table_gateway(rows: &[(&str, f64, u64)]) -> (Gateway, Arc<Table>) {
        let t = Arc::new(Table(rows.iter().map(|(c, lp, r)| (c.to_string(), (*lp, *r))).collect(), Mutex::new(vec![])));
        (Gateway::new(t.clone()), t)
    }

    #[test]
    fn contextual_pooling() {
        let (gw, t) = table_gateway(&[("more", -1.0, 1), ("recently", -3.0, 3), ("soon", -2.0, 7)]);
        let two = inst("q", "It happened ____ than expected.", "soon", "more recently", false);
        let f = contextual_features(&two, Side::Distractor, &gw).unwrap();
        assert_eq!(&f[..3], &[-2.0, -3.0, -1.0]);
        assert_abs_diff_eq!(f[3], 3f64.ln() / 2.0, epsilon = 1e-12);
        assert_eq!(
            *t.1.lock().unwrap(),
            vec!["It happened [MASK] recently than expected.", "It happened more [MASK] than expected."]
        );
        let one = contextual_features(&two, Side::Correct, &gw).unwrap();
        assert_eq!(one[0], one[1]);
        assert_eq!(one[1], one[2]);
        assert_eq!(one[3], one[5]);
    }

    #[test]
    fn rank_channel_uses_natural_log() {
        // Ranks 1 and 3 give ln values 0 and ln 3.
        let (gw, _) = table_gateway(&[("a", -0.5, 1), ("b", -0.5, 3)]);
        let f = contextual_features(&inst("q", "x ____ y", "c", "a b", false), Side::Distractor, &gw).unwrap();
        assert_eq!(f[4], 0.0);
        assert_abs_diff_eq!(f[5], 3f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn feature_widths() {
        let v = wv(&[("a", vec![1.0]), ("b", vec![2.0])]);
        let table = FrequencyTable::from_vectors(&v);
        let (gw, _) = table_gateway(&[("a", -1.0, 1), ("b", -2.0, 2)]);
        let i = inst("q", "x ____ y", "a", "b", true);
        for cfg in [
            FeatureConfig::default(),
            FeatureConfig { contextual: true, include_correct_context: false },
            FeatureConfig { contextual: true, include_correct_context: true },
        ] {
            let fv = extract_features(&i, &v, &table, &cfg, Some(&gw)).unwrap();
            assert_eq!(fv.to_vec().len(), FeatureVector::width(&cfg));
            assert!(fv.to_vec().iter().all(|x| x.is_finite()));
        }
        assert!(extract_features(&i, &v, &table, &FeatureConfig { contextual: true, include_correct_context: false }, None).is_err());
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(tune_threshold(&[0.05, 0.2, 0.35, 0.9], &[false, false, true, true]), 0.3);
        assert_eq!(tune_threshold(&[0.5, 0.7], &[false, false]), 0.1);
        assert_eq!(tune_threshold(&[0.95, 0.05], &[true, false]), 0.1);
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(normalize_scores_minmax(&[2.0, 4.0, 6.0]), vec![0.0, 0.5, 1.0]);
        assert_eq!(normalize_scores_minmax(&[3.0, 3.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn ranking_is_per_question() {
        let rows = vec![
            inst("a1", "ctx A ____", "go", "went", false),
            inst("b1", "ctx B ____", "run", "ran", true),
            inst("a2", "ctx A ____", "go", "goes", true),
            inst("b2", "ctx B ____", "run", "runs", false),
        ];
        let cands: Vec<Candidate> = rows.iter().map(Candidate::from).collect();
        let ranked = rank_candidates(&cands, &[0.2, 0.9, 0.8, 0.1]);
        let view: Vec<(&str, usize, f64)> =
            ranked.iter().map(|r| (r.instance_id.as_str(), r.rank, r.normalized_score)).collect();
        assert_eq!(view, vec![("a2", 1, 1.0), ("a1", 2, 0.0), ("b1", 1, 1.0), ("b2", 2, 0.0)]);
    }

    proptest! {
        #[test]
        fn static_feature_symmetry(a in "[a-z]{1,8}( [a-z]{1,8})?", b in "[a-z]{1,8}( [a-z]{1,8})?") {
            let words: Vec<String> = a.split(' ').chain(b.split(' ')).map(String::from).collect();
            let entries: Vec<(String, Vec<f64>)> = words
                .iter()
                .enumerate()
                .map(|(i, w)| (w.clone(), vec![(i as f64 * 0.7).sin(), (i as f64 * 1.3).cos(), 0.5]))
                .collect();
            let v = WordVectors::from_entries(entries).unwrap();
            let t = FrequencyTable::from_vectors(&v);
            prop_assert_eq!(length_difference(&a, &b), length_difference(&b, &a));
            prop_assert!((embedding_similarity(&a, &b, &v).0 - embedding_similarity(&b, &a, &v).0).abs() < 1e-12);
            prop_assert_eq!(rank_difference(&a, &b, &t), rank_difference(&b, &a, &t));
        }

        #[test]
        fn frequency_non_increasing(r1 in 1usize..1000, r2 in 1usize..1000) {
            let t = FrequencyTable::from_ranked((1..=1000).map(|i| format!("w{i}")));
            let (lo, hi) = (r1.min(r2), r1.max(r2));
            let (f_lo, f_hi) = (distractor_frequency(&format!("w{lo}"), &t), distractor_frequency(&format!("w{hi}"), &t));
            prop_assert!(f_lo >= f_hi);
        }

        #[test]
        fn tuned_threshold_is_grid_optimal(pairs in proptest::collection::vec((0.0f64..1.0, any::<bool>()), 1..30)) {
            let s: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let l: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            let t = tune_threshold(&s, &l);
            let f = |t: f64| prf1_binary(&s, &l, t).unwrap().f1;
            for k in 1..=9 {
                prop_assert!(f(t) >= f(k as f64 / 10.0));
            }
        }

        #[test]
        fn minmax_preserves_order(s in proptest::collection::vec(-50.0f64..50.0, 2..20)) {
            let n = normalize_scores_minmax(&s);
            prop_assert!(n.iter().all(|x| (0.0..=1.0).contains(x)));
            for i in 0..s.len() {
                for j in 0..s.len() {
                    if s[i] < s[j] {
                        prop_assert!(n[i] <= n[j]);
                    }
                }
            }
        }
    }
}
