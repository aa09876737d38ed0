//! The single boundary to any language model.
//!
//! A [`Backend`] answers the three request kinds of the wire protocol. The
//! [`Gateway`] wraps one backend with request validation, reply validation,
//! an optional content-addressed [`ScoreCache`] and bounded fan-out for
//! batches.

pub mod cache;
pub mod mock;
pub mod protocol;
pub mod vectors;

use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{CacheKey, ScoreCache, CACHE_DIR_ENV};
pub use mock::MockBackend;
pub use protocol::{
    EmbedRequest, EmbedResponse, MaskFillRequest, MaskFillResponse, ScoreRequest, ScoreResponse, MASK,
};
pub use vectors::{load_word_vectors, VectorsError, WordVectors};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    /// Timeouts and connection failures. Safe to retry.
    #[error("transport error (retriable): {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("token {0:?} is not in the backend vocabulary")]
    Vocabulary(String),
    #[error("invalid request: {0}")]
    Precondition(String),
    #[error("cache error: {0}")]
    Cache(String),
}

impl GatewayError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, GatewayError::Transport(_))
    }
}

pub trait Backend: Send + Sync {
    /// Stable identifier; part of every cache key.
    fn id(&self) -> String;
    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse, GatewayError>;
    fn mask_fill(&self, req: &MaskFillRequest) -> Result<MaskFillResponse, GatewayError>;
    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse, GatewayError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn id(&self) -> String {
        (**self).id()
    }
    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse, GatewayError> {
        (**self).score(req)
    }
    fn mask_fill(&self, req: &MaskFillRequest) -> Result<MaskFillResponse, GatewayError> {
        (**self).mask_fill(req)
    }
    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse, GatewayError> {
        (**self).embed(req)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestKind {
    Score,
    MaskFill,
    Embed,
}

impl RequestKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RequestKind::Score => "score",
            RequestKind::MaskFill => "maskfill",
            RequestKind::Embed => "embed",
        }
    }
}

/// Log of the arithmetic mean of per-position probabilities. This is how a
/// multi-unit candidate is scored when each unit is masked in turn.
pub fn pooled_log_prob(position_probs: &[f64]) -> f64 {
    let mean = position_probs.iter().sum::<f64>() / position_probs.len() as f64;
    mean.ln()
}

/// Splits a candidate into the units that are masked one at a time.
pub fn candidate_units(candidate: &str) -> Vec<&str> {
    candidate.split_whitespace().collect()
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    cache: Option<ScoreCache>,
    max_in_flight: usize,
    embed_dim: Mutex<Option<usize>>,
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        Self { backend, cache: None, max_in_flight: 8, embed_dim: Mutex::new(None) }
    }

    pub fn with_cache(mut self, cache: ScoreCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_max_in_flight(mut self, bound: usize) -> Self {
        self.max_in_flight = bound.max(1);
        self
    }

    pub fn backend_id(&self) -> String {
        self.backend.id()
    }

    pub fn cache(&self) -> Option<&ScoreCache> {
        self.cache.as_ref()
    }

    pub fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    fn cached<Req, Resp>(
        &self,
        kind: RequestKind,
        req: &Req,
        call: impl FnOnce() -> Result<Resp, GatewayError>,
    ) -> Result<Resp, GatewayError>
    where
        Req: Serialize,
        Resp: Serialize + for<'de> Deserialize<'de>,
    {
        let Some(cache) = &self.cache else {
            return call();
        };
        let key = CacheKey::new(&self.backend.id(), kind, req)?;
        if let Some(hit) = cache.get::<Resp>(&key)? {
            return Ok(hit);
        }
        let resp = call()?;
        cache.put(&key, &resp)?;
        Ok(resp)
    }

    /// One log-score per candidate, in candidate order.
    pub fn score_completions(&self, req: &ScoreRequest) -> Result<Vec<f64>, GatewayError> {
        validate_candidates(&req.candidates)?;
        let resp = self.cached(RequestKind::Score, req, || self.backend.score(req))?;
        check_finite(&resp.log_scores, req.candidates.len(), "log_scores")?;
        Ok(resp.log_scores)
    }

    pub fn mask_fill(&self, req: &MaskFillRequest) -> Result<MaskFillResponse, GatewayError> {
        if !req.text_with_mask.contains(MASK) {
            return Err(GatewayError::Precondition(format!("text contains no {MASK} token")));
        }
        if req.candidates.is_empty() {
            return Err(GatewayError::Precondition("empty candidate list".into()));
        }
        let resp = self.cached(RequestKind::MaskFill, req, || self.backend.mask_fill(req))?;
        check_finite(&resp.log_probs, req.candidates.len(), "log_probs")?;
        if resp.ranks.len() != req.candidates.len() {
            return Err(GatewayError::Protocol(format!(
                "expected {} ranks, got {}",
                req.candidates.len(),
                resp.ranks.len()
            )));
        }
        if resp.ranks.contains(&0) {
            return Err(GatewayError::Protocol("ranks start at 1".into()));
        }
        Ok(resp)
    }

    /// Per-candidate log-probability at the mask.
    pub fn mask_fill_scores(&self, req: &MaskFillRequest) -> Result<Vec<f64>, GatewayError> {
        Ok(self.mask_fill(req)?.log_probs)
    }

    /// Rank (1 = most probable) of `candidate` in the backend distribution at
    /// the mask.
    pub fn mask_fill_rank(&self, text_with_mask: &str, candidate: &str) -> Result<u64, GatewayError> {
        let req = MaskFillRequest {
            text_with_mask: text_with_mask.to_string(),
            candidates: vec![candidate.to_string()],
        };
        Ok(self.mask_fill(&req)?.ranks[0])
    }

    pub fn embed_texts(&self, req: &EmbedRequest) -> Result<Vec<Vec<f64>>, GatewayError> {
        if req.texts.is_empty() {
            return Err(GatewayError::Precondition("empty text list".into()));
        }
        let resp = self.cached(RequestKind::Embed, req, || self.backend.embed(req))?;
        if resp.vectors.len() != req.texts.len() {
            return Err(GatewayError::Protocol(format!(
                "expected {} vectors, got {}",
                req.texts.len(),
                resp.vectors.len()
            )));
        }
        if resp.vectors.iter().any(|v| v.len() != resp.dim) {
            return Err(GatewayError::Protocol("vector dimension differs from reported dim".into()));
        }
        let mut known = self.embed_dim.lock().expect("embed dim lock");
        match *known {
            Some(d) if d != resp.dim => {
                return Err(GatewayError::Protocol(format!(
                    "backend dimension changed from {d} to {}",
                    resp.dim
                )))
            }
            _ => *known = Some(resp.dim),
        }
        Ok(resp.vectors)
    }

    /// Applies `f` to every item with at most `max_in_flight` concurrent
    /// calls. Results keep input order.
    pub fn map_bounded<T, R, F>(&self, items: &[T], f: F) -> Vec<R>
    where
        T: Sync,
        R: Send,
        F: Fn(&T) -> R + Sync + Send,
    {
        if self.max_in_flight <= 1 || items.len() <= 1 {
            return items.iter().map(f).collect();
        }
        match rayon::ThreadPoolBuilder::new().num_threads(self.max_in_flight).build() {
            Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
            Err(_) => items.iter().map(f).collect(),
        }
    }
}

fn validate_candidates(candidates: &[String]) -> Result<(), GatewayError> {
    if candidates.is_empty() {
        return Err(GatewayError::Precondition("empty candidate list".into()));
    }
    let mut seen = std::collections::HashSet::new();
    for c in candidates {
        if !seen.insert(c.as_str()) {
            return Err(GatewayError::Precondition(format!("duplicate candidate {c:?}")));
        }
    }
    Ok(())
}

fn check_finite(values: &[f64], expected: usize, field: &str) -> Result<(), GatewayError> {
    if values.len() != expected {
        return Err(GatewayError::Protocol(format!("expected {expected} {field}, got {}", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(GatewayError::Protocol(format!("non-finite value in {field}")));
    }
    Ok(())
}
