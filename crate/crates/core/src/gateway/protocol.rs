//! Wire types for the gateway HTTP protocol.
//!
//! ```text
//! POST /v1/score    {"prompt": str, "candidates": [str]} -> {"log_scores": [float]}
//! POST /v1/maskfill {"text": str, "candidates": [str]}   -> {"log_probs": [float], "ranks": [int]}
//! POST /v1/embed    {"texts": [str]}                     -> {"vectors": [[float]], "dim": int}
//! GET  /healthz                                          -> {"status": "ok", "backend_id": str, "models": [str]}
//! ```

use serde::{Deserialize, Serialize};

pub const SCORE_PATH: &str = "/v1/score";
pub const MASKFILL_PATH: &str = "/v1/maskfill";
pub const EMBED_PATH: &str = "/v1/embed";
pub const HEALTH_PATH: &str = "/healthz";

/// Mask token used in every mask-fill request.
pub const MASK: &str = "[MASK]";

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub prompt: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreResponse {
    pub log_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MaskFillRequest {
    #[serde(rename = "text")]
    pub text_with_mask: String,
    pub candidates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskFillResponse {
    pub log_probs: Vec<f64>,
    pub ranks: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f64>>,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthResponse {
    pub status: String,
    pub backend_id: String,
    #[serde(default)]
    pub models: Vec<String>,
}

/// Error payload returned by servers with a non-2xx status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    pub error: String,
    #[serde(default)]
    pub kind: String,
}
