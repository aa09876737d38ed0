//! Blocking HTTP [`Backend`] that talks to a gateway protocol server.

use std::time::Duration;

use promptlab_core::gateway::protocol::{ErrorPayload, HealthResponse, EMBED_PATH, HEALTH_PATH, MASKFILL_PATH, SCORE_PATH};
use promptlab_core::gateway::{
    Backend, EmbedRequest, EmbedResponse, GatewayError, MaskFillRequest, MaskFillResponse, ScoreRequest,
    ScoreResponse,
};
use reqwest::blocking::Client;
use reqwest::Url;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

#[derive(Debug, Clone)]
pub struct HttpBackend {
    base: Url,
    client: Client,
    backend_id: String,
}

fn transport(e: impl std::fmt::Display) -> GatewayError {
    GatewayError::Transport(e.to_string())
}

impl HttpBackend {
    /// Connects and asks `/healthz` for the remote backend id.
    pub fn connect(base: &str) -> Result<Self, GatewayError> {
        Self::connect_with_timeout(base, DEFAULT_TIMEOUT)
    }

    pub fn connect_with_timeout(base: &str, timeout: Duration) -> Result<Self, GatewayError> {
        let mut backend = Self::with_id(base, "", timeout)?;
        let health: HealthResponse = backend.get(HEALTH_PATH)?;
        if health.status != "ok" {
            return Err(GatewayError::Transport(format!("server status {:?}", health.status)));
        }
        backend.backend_id = health.backend_id;
        Ok(backend)
    }

    /// No network round-trip; the caller vouches for `backend_id`.
    pub fn with_id(base: &str, backend_id: &str, timeout: Duration) -> Result<Self, GatewayError> {
        let base = Url::parse(base).map_err(|e| GatewayError::Precondition(format!("bad backend url {base:?}: {e}")))?;
        let client = Client::builder().timeout(timeout).build().map_err(transport)?;
        Ok(Self { base, client, backend_id: backend_id.to_string() })
    }

    pub fn base_url(&self) -> &Url {
        &self.base
    }

    fn url(&self, path: &str) -> Result<Url, GatewayError> {
        self.base.join(path).map_err(|e| GatewayError::Precondition(e.to_string()))
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, GatewayError> {
        let resp = self.client.get(self.url(path)?).send().map_err(transport)?;
        decode(resp)
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, GatewayError> {
        let resp = self.client.post(self.url(path)?).json(body).send().map_err(transport)?;
        decode(resp)
    }
}

fn decode<T: DeserializeOwned>(resp: reqwest::blocking::Response) -> Result<T, GatewayError> {
    let status = resp.status();
    let bytes = resp.bytes().map_err(transport)?;
    if !status.is_success() {
        return Err(match serde_json::from_slice::<ErrorPayload>(&bytes) {
            Ok(p) if p.kind == "vocabulary" => GatewayError::Vocabulary(p.error),
            Ok(p) if p.kind == "precondition" => GatewayError::Precondition(p.error),
            Ok(p) if status.is_server_error() && p.kind == "transport" => GatewayError::Transport(p.error),
            Ok(p) => GatewayError::Protocol(format!("{status}: {}", p.error)),
            Err(_) => GatewayError::Protocol(format!("{status}: {}", String::from_utf8_lossy(&bytes))),
        });
    }
    serde_json::from_slice(&bytes).map_err(|e| GatewayError::Protocol(format!("malformed reply: {e}")))
}

impl Backend for HttpBackend {
    fn id(&self) -> String {
        self.backend_id.clone()
    }

    fn score(&self, req: &ScoreRequest) -> Result<ScoreResponse, GatewayError> {
        self.post(SCORE_PATH, req)
    }

    fn mask_fill(&self, req: &MaskFillRequest) -> Result<MaskFillResponse, GatewayError> {
        self.post(MASKFILL_PATH, req)
    }

    fn embed(&self, req: &EmbedRequest) -> Result<EmbedResponse, GatewayError> {
        self.post(EMBED_PATH, req)
    }
}
