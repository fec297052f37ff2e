//! OpenAI-compatible chat-completions transport.

use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Attempt, ChatRequest, GatewayError, Transport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthStyle {
    /// `Authorization: Bearer <key>` (OpenAI and most compatible servers).
    Bearer,
    /// `api-key: <key>` (Azure OpenAI).
    ApiKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Inline key; prefer `api_key_env`.
    #[serde(default)]
    pub api_key: Option<String>,
    /// Sent as the `api-version` query parameter when set (Azure).
    #[serde(default)]
    pub api_version: Option<String>,
    #[serde(default = "default_auth")]
    pub auth: AuthStyle,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
}

fn default_auth() -> AuthStyle {
    AuthStyle::Bearer
}

fn default_timeout_ms() -> u64 {
    60_000
}

pub struct HttpTransport {
    client: Client,
    url: String,
    model: String,
    auth: Option<(AuthStyle, String)>,
}

impl HttpTransport {
    pub fn new(config: &HttpConfig) -> Result<Self, GatewayError> {
        if config.base_url.trim().is_empty() || config.model.trim().is_empty() {
            return Err(GatewayError::Config("http backend needs base_url and model".into()));
        }
        let key = match (&config.api_key, &config.api_key_env) {
            (Some(key), _) => Some(key.clone()),
            (None, Some(var)) => Some(std::env::var(var).map_err(|_| {
                GatewayError::Config(format!("environment variable {var} is not set"))
            })?),
            (None, None) => None,
        };
        let mut url = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        if let Some(version) = &config.api_version {
            url.push_str("?api-version=");
            url.push_str(version);
        }
        let client = Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| GatewayError::Config(format!("http client: {e}")))?;
        Ok(Self { client, url, model: config.model.clone(), auth: key.map(|k| (config.auth.clone(), k)) })
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<Attempt, GatewayError> {
        let body = json!({
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut builder = self.client.post(&self.url).json(&body);
        builder = match &self.auth {
            Some((AuthStyle::Bearer, key)) => builder.bearer_auth(key),
            Some((AuthStyle::ApiKey, key)) => builder.header("api-key", key),
            None => builder,
        };
        let response = match builder.send() {
            Ok(r) => r,
            Err(e) if e.is_timeout() => return Ok(Attempt::Transient(format!("timeout: {e}"))),
            Err(e) => return Ok(Attempt::Transient(format!("transport: {e}"))),
        };
        let status = response.status();
        let text = match response.text() {
            Ok(t) => t,
            Err(e) => return Ok(Attempt::Transient(format!("reading body: {e}"))),
        };
        Ok(classify(status, &text))
    }
}

/// Maps an HTTP status and body onto an [`Attempt`].
pub fn classify(status: StatusCode, body: &str) -> Attempt {
    let value: Option<Value> = serde_json::from_str(body).ok();
    if !status.is_success() {
        if value.as_ref().is_some_and(is_content_filter_error) {
            return Attempt::ContentFiltered;
        }
        let detail = format!("http {}: {}", status.as_u16(), truncate(body, 200));
        return if status == StatusCode::TOO_MANY_REQUESTS
            || status == StatusCode::REQUEST_TIMEOUT
            || status.is_server_error()
        {
            Attempt::Transient(detail)
        } else {
            Attempt::Permanent(detail)
        };
    }
    let Some(value) = value else {
        return Attempt::Transient(format!("unparseable completion body: {}", truncate(body, 200)));
    };
    let choice = &value["choices"][0];
    if choice["finish_reason"].as_str() == Some("content_filter") {
        return Attempt::ContentFiltered;
    }
    let message = &choice["message"];
    if message["refusal"].as_str().is_some_and(|r| !r.is_empty()) {
        return Attempt::Refused;
    }
    match message["content"].as_str() {
        Some(content) => Attempt::Text(content.to_string()),
        None => Attempt::Transient("completion without message content".into()),
    }
}

fn is_content_filter_error(value: &Value) -> bool {
    let error = &value["error"];
    let code = error["code"].as_str().unwrap_or_default();
    let inner = error["innererror"]["code"].as_str().unwrap_or_default();
    code == "content_filter" || inner == "ResponsibleAIPolicyViolation"
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}
