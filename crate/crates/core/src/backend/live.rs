//! OpenAI-compatible chat-completions adapter.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BackendError, BackendRequest, BackendResponse, ModelBackend};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpenAiConfig {
    pub model_id: String,
    #[serde(default = "default_endpoint")]
    pub endpoint: String,
    /// Environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_endpoint() -> String {
    "https://api.openai.com/v1/chat/completions".to_string()
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".to_string()
}

fn default_timeout() -> u64 {
    60
}

pub struct OpenAiBackend {
    config: OpenAiConfig,
    api_key: String,
    client: reqwest::blocking::Client,
}

impl OpenAiBackend {
    pub fn new(config: OpenAiConfig) -> Result<Self, BackendError> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| BackendError::MissingCredentials(config.api_key_env.clone()))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(OpenAiBackend { config, api_key, client })
    }
}

fn request_body(request: &BackendRequest) -> serde_json::Value {
    json!({
        "model": request.model_id,
        "messages": [{ "role": "user", "content": request.prompt }],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    })
}

fn extract_text(body: &serde_json::Value) -> Result<String, BackendError> {
    body.pointer("/choices/0/message/content")
        .and_then(|v| v.as_str())
        .map(str::to_string)
        .ok_or_else(|| BackendError::Api {
            status: 200,
            message: format!("unexpected response shape: {body}"),
        })
}

impl ModelBackend for OpenAiBackend {
    fn model_id(&self) -> &str {
        &self.config.model_id
    }

    fn complete(&self, request: &BackendRequest) -> Result<BackendResponse, BackendError> {
        request.validate()?;
        let start = Instant::now();
        let resp = self
            .client
            .post(&self.config.endpoint)
            .bearer_auth(&self.api_key)
            .json(&request_body(request))
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 {
            let retry_after = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|s| s.trim().parse::<f64>().ok())
                .map(Duration::from_secs_f64);
            return Err(BackendError::RateLimited { retry_after });
        }
        if status.is_server_error() {
            return Err(BackendError::Transport(format!("server error {status}")));
        }
        if !status.is_success() {
            let message = resp.text().unwrap_or_default();
            return Err(BackendError::Api { status: status.as_u16(), message });
        }
        let body: serde_json::Value = resp.json().map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(BackendResponse {
            text: extract_text(&body)?,
            latency: start.elapsed(),
            cached: false,
        })
    }
}
