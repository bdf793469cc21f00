//! HTTP chat-completion provider (OpenAI / Azure OpenAI wire format).

use std::fmt;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{CompletionProvider, Message, ProviderError};
use crate::model::GenerationParams;

pub const ENDPOINT_ENV: &str = "GROUNDCHECK_ENDPOINT";
pub const API_KEY_ENV: &str = "GROUNDCHECK_API_KEY";

/// How the API key is presented to the endpoint.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuthStyle {
    /// `api-key: <key>` (Azure OpenAI).
    #[default]
    ApiKey,
    /// `Authorization: Bearer <key>`.
    Bearer,
}

pub struct RemoteProvider {
    endpoint: String,
    api_key: Option<String>,
    auth: AuthStyle,
    model: Option<String>,
    agent: ureq::Agent,
}

// The key must never reach logs.
impl fmt::Debug for RemoteProvider {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteProvider")
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("auth", &self.auth)
            .field("model", &self.model)
            .finish()
    }
}

impl RemoteProvider {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key,
            auth: AuthStyle::default(),
            model: None,
            agent: ureq::AgentBuilder::new()
                .timeout_connect(Duration::from_secs(10))
                .timeout(Duration::from_secs(300))
                .build(),
        }
    }

    /// Endpoint and key from `GROUNDCHECK_ENDPOINT` / `GROUNDCHECK_API_KEY`.
    pub fn from_env() -> Result<Self, ProviderError> {
        let endpoint = std::env::var(ENDPOINT_ENV)
            .map_err(|_| ProviderError::Config(format!("{ENDPOINT_ENV} is not set")))?;
        Ok(Self::new(endpoint, std::env::var(API_KEY_ENV).ok()))
    }

    pub fn with_auth(mut self, auth: AuthStyle) -> Self {
        self.auth = auth;
        self
    }

    pub fn with_model(mut self, model: Option<String>) -> Self {
        self.model = model;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.agent = ureq::AgentBuilder::new()
            .timeout_connect(timeout.min(Duration::from_secs(10)))
            .timeout(timeout)
            .build();
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }
}

/// JSON body for one chat-completion request.
pub fn request_body(messages: &[Message], params: &GenerationParams, model: Option<&str>) -> Value {
    let mut body = json!({
        "messages": messages,
        "temperature": params.temperature,
        "top_p": params.top_p,
        "max_tokens": params.max_tokens,
        "frequency_penalty": params.frequency_penalty,
        "presence_penalty": params.presence_penalty,
    });
    if let Some(model) = model {
        body["model"] = Value::String(model.to_string());
    }
    body
}

/// Reads the first choice's message content.
pub fn parse_completion(body: &Value) -> Result<String, ProviderError> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| ProviderError::Malformed("response has no choices".into()))?;
    if choice.get("finish_reason").and_then(Value::as_str) == Some("content_filter") {
        return Err(ProviderError::Refusal(
            "completion blocked by content filter".into(),
        ));
    }
    choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ProviderError::Malformed("first choice has no message content".into()))
}

fn excerpt(s: &str) -> String {
    s.chars().take(200).collect()
}

impl CompletionProvider for RemoteProvider {
    fn complete(
        &self,
        messages: &[Message],
        params: &GenerationParams,
    ) -> Result<String, ProviderError> {
        let mut req = self
            .agent
            .post(&self.endpoint)
            .set("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = match self.auth {
                AuthStyle::ApiKey => req.set("api-key", key),
                AuthStyle::Bearer => req.set("Authorization", &format!("Bearer {key}")),
            };
        }
        let body = request_body(messages, params, self.model.as_deref());
        match req.send_json(body) {
            Ok(resp) => {
                let value: Value = resp
                    .into_json()
                    .map_err(|e| ProviderError::Malformed(e.to_string()))?;
                parse_completion(&value)
            }
            Err(ureq::Error::Status(status, resp)) => {
                let text = resp.into_string().unwrap_or_default();
                Err(match status {
                    429 => ProviderError::RateLimited,
                    500..=599 => ProviderError::Server { status },
                    _ => ProviderError::Rejected {
                        status,
                        message: excerpt(&text),
                    },
                })
            }
            Err(ureq::Error::Transport(t)) => Err(ProviderError::Transport(t.kind().to_string())),
        }
    }
}
