use serde::{Deserialize, Serialize};

use super::{Role, UnitVector, VectorProvider};
use crate::error::{Error, Result};
use crate::http::JsonClient;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteProviderConfig {
    pub endpoint: String,
    /// Environment variable holding a bearer token, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_in_flight() -> usize {
    4
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    role: &'static str,
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Embedding service speaking `{"role", "texts"} -> {"vectors"}`.
#[derive(Debug)]
pub struct RemoteProvider {
    client: JsonClient,
    d_style: usize,
    d_sem: usize,
}

impl RemoteProvider {
    pub fn new(cfg: RemoteProviderConfig, d_style: usize, d_sem: usize) -> Result<Self> {
        if cfg.endpoint.is_empty() {
            return Err(Error::Config("remote embedding endpoint is empty".into()));
        }
        let bearer = cfg.api_key_env.as_deref().and_then(|k| std::env::var(k).ok());
        Ok(Self {
            client: JsonClient::new(&cfg.endpoint, bearer, cfg.timeout_ms, cfg.max_in_flight),
            d_style,
            d_sem,
        })
    }
}

impl VectorProvider for RemoteProvider {
    fn dim(&self, role: Role) -> usize {
        match role {
            Role::Style => self.d_style,
            Role::Semantic | Role::SemanticTokens => self.d_sem,
        }
    }

    fn embed(&self, role: Role, texts: &[&str]) -> Result<Vec<UnitVector>> {
        let resp: EmbedResponse = self.client.post(&EmbedRequest {
            role: role.as_str(),
            texts,
        })?;
        if resp.vectors.len() != texts.len() {
            return Err(Error::RemoteUnavailable(format!(
                "expected {} vectors, got {}",
                texts.len(),
                resp.vectors.len()
            )));
        }
        let dim = self.dim(role);
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != dim {
                    return Err(Error::RemoteUnavailable(format!("vector of length {} (want {dim})", v.len())));
                }
                UnitVector::normalize(v).map_err(|e| Error::RemoteUnavailable(format!("bad vector: {e}")))
            })
            .collect()
    }
}
