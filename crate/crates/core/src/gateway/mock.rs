//! Deterministic mock backend. Every output is a pure function of the
//! request content.
//!
//! * completion score of `candidate` after `prompt`:
//!   `-(fnv1a64(prompt ++ "\0" ++ candidate) mod 10^6) / 10^5`, in `(-10, 0]`
//! * embedding component `i` of `text` (dimension 16 by default):
//!   `((fnv1a64(text ++ decimal(i)) mod 2000) - 1000) / 1000`
//! * mask filling: the logit of token `t` at the mask of `text` is the
//!   completion score of `t` after `text`. The distribution is the softmax of
//!   these logits over the vocabulary: the configured vocabulary, or, in open
//!   mode, [`FILLER_VOCAB`] plus the queried token. Multi-unit candidates are
//!   scored by masking each unit in turn and averaging the probabilities;
//!   their reported rank is the worst unit rank.

use super::protocol::*;
use super::{candidate_units, pooled_log_prob, Backend, GatewayError};
use crate::hash::fnv1a64;

pub const MOCK_EMBED_DIM: usize = 16;

/// Background tokens competing with the candidate in open-vocabulary mode.
pub const FILLER_VOCAB: &[&str] = &[
    "the", "a", "of", "and", "to", "in", "is", "it", "that", "was", "for", "on", "with", "as", "at",
    "by", "this", "from", "or", "an", "be", "are", "not", "but", "have", "they", "we", "you", "his",
    "her", "which", "one",
];

pub fn mock_score(prompt: &str, candidate: &str) -> f64 {
    let mut bytes = Vec::with_capacity(prompt.len() + candidate.len() + 1);
    bytes.extend_from_slice(prompt.as_bytes());
    bytes.push(0);
    bytes.extend_from_slice(candidate.as_bytes());
    -((fnv1a64(&bytes) % 1_000_000) as f64) / 100_000.0
}

pub fn mock_embedding(text: &str, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|i| {
            let key = format!("{text}{i}");
            ((fnv1a64(key.as_bytes()) % 2000) as f64 - 1000.0) / 1000.0
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct MockBackend {
    vocab: Option<Vec<String>>,
    dim: usize,
}

impl Default for MockBackend {
    fn default() -> Self {
        Self { vocab: None, dim: MOCK_EMBED_DIM }
    }
}

impl MockBackend {
    pub fn new() -> Self {
        Self::default()
    }

    /// Closed vocabulary: tokens outside it are a vocabulary error.
    pub fn with_vocab<S: Into<String>>(vocab: impl IntoIterator<Item = S>) -> Self {
        let mut v: Vec<String> = vocab.into_iter().map(Into::into).collect();
        v.sort();
        v.dedup();
        Self { vocab: Some(v), dim: MOCK_EMBED_DIM }
    }

    pub fn with_dim(mut self, dim: usize) -> Self {
        self.dim = dim;
        self
    }

    /// `(log_prob, rank)` of a single token at the mask of `text`.
    fn token_at_mask(&self, text: &str, token: &str) -> Result<(f64, u64), GatewayError> {
        let logit = mock_score(text, token);
        let others: Vec<&str> = match &self.vocab {
            Some(v) => {
                if v.binary_search_by(|t| t.as_str().cmp(token)).is_err() {
                    return Err(GatewayError::Vocabulary(token.to_string()));
                }
                v.iter().map(String::as_str).filter(|t| *t != token).collect()
            }
            None => FILLER_VOCAB.iter().copied().filter(|t| *t != token).collect(),
        };
        let other_logits: Vec<(f64, &str)> = others.iter().map(|t| (mock_score(text, t), *t)).collect();
        let max = other_logits.iter().map(|(l, _)| *l).fold(logit, f64::max);
        let denom: f64 = (logit - max).exp() + other_logits.iter().map(|(l, _)| (l - max).exp()).sum::<f64>();
        let log_prob = logit - max - denom.ln();
        let ahead = other_logits
            .iter()
            .filter(|(l, t)| *l > logit || (*l == logit && *t < token))
            .count();
        Ok((log_prob, ahead as u64 + 1))
    }
}

impl Backend for MockBackend {
    fn id(&self) -> String {
        match &self.vocab {
            None => format!("mock-v1-d{}", self.dim),
            Some(v) => format!("mock-v1-d{}-vocab{:016x}", self.dim, fnv1a64(v.join("\n").as_bytes())),
        }
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse, GatewayError> {
        Ok(ScoreResponse { log_scores: req.candidates.iter().map(|c| mock_score(&req.prompt, c)).collect() })
    }

    fn mask_fill(&self, req: &MaskFillRequest) -> Result<MaskFillResponse, GatewayError> {
        let Some(at) = req.text_with_mask.find(MASK) else {
            return Err(GatewayError::Precondition(format!("text contains no {MASK} token")));
        };
        let (before, after) = (&req.text_with_mask[..at], &req.text_with_mask[at + MASK.len()..]);
        let mut log_probs = Vec::with_capacity(req.candidates.len());
        let mut ranks = Vec::with_capacity(req.candidates.len());
        for cand in &req.candidates {
            let units = candidate_units(cand);
            if units.is_empty() {
                return Err(GatewayError::Precondition("empty candidate".into()));
            }
            if units.len() == 1 {
                let (lp, rank) = self.token_at_mask(&req.text_with_mask, units[0])?;
                log_probs.push(lp);
                ranks.push(rank);
                continue;
            }
            let mut probs = Vec::with_capacity(units.len());
            let mut worst = 1;
            for j in 0..units.len() {
                let filled: Vec<&str> =
                    units.iter().enumerate().map(|(k, u)| if k == j { MASK } else { *u }).collect();
                let text = format!("{before}{}{after}", filled.join(" "));
                let (lp, rank) = self.token_at_mask(&text, units[j])?;
                probs.push(lp.exp());
                worst = worst.max(rank);
            }
            log_probs.push(pooled_log_prob(&probs));
            ranks.push(worst);
        }
        Ok(MaskFillResponse { log_probs, ranks })
    }

    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse, GatewayError> {
        Ok(EmbedResponse { vectors: req.texts.iter().map(|t| mock_embedding(t, self.dim)).collect(), dim: self.dim })
    }
}
