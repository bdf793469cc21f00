//! Client for a Text Analytics style entity recognition endpoint.

use std::fmt;
use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{EntityCategorySet, NerError, NerProvider};
use crate::model::EntitySpan;

pub const NER_ENDPOINT_ENV: &str = "GROUNDCHECK_NER_ENDPOINT";
pub const NER_KEY_ENV: &str = "GROUNDCHECK_NER_KEY";

pub struct RemoteNer {
    endpoint: String,
    key: Option<String>,
    language: String,
    agent: ureq::Agent,
}

impl fmt::Debug for RemoteNer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RemoteNer")
            .field("endpoint", &self.endpoint)
            .field("key", &self.key.as_ref().map(|_| "<redacted>"))
            .field("language", &self.language)
            .finish()
    }
}

impl RemoteNer {
    /// `endpoint` is the full entity-recognition URL. Offsets are requested
    /// as Unicode code points so they line up with [`EntitySpan`] offsets.
    pub fn new(endpoint: impl Into<String>, key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            key,
            language: "en".into(),
            agent: ureq::AgentBuilder::new()
                .timeout(Duration::from_secs(60))
                .build(),
        }
    }

    pub fn from_env() -> Result<Self, NerError> {
        let endpoint = std::env::var(NER_ENDPOINT_ENV)
            .map_err(|_| NerError::Config(format!("{NER_ENDPOINT_ENV} is not set")))?;
        Ok(Self::new(endpoint, std::env::var(NER_KEY_ENV).ok()))
    }

    pub fn with_language(mut self, language: impl Into<String>) -> Self {
        self.language = language.into();
        self
    }
}

pub fn request_body(text: &str, language: &str) -> Value {
    json!({"documents": [{"id": "1", "text": text, "language": language}]})
}

#[derive(Deserialize)]
struct Payload {
    documents: Vec<Document>,
}

#[derive(Deserialize)]
struct Document {
    entities: Vec<RawEntity>,
}

#[derive(Deserialize)]
struct RawEntity {
    text: String,
    category: String,
    #[serde(default)]
    subcategory: Option<String>,
    offset: usize,
    length: usize,
}

/// Converts a response payload into spans named `Category` or
/// `Category-Subcategory`. Category filtering happens in [`super::recognize`].
pub fn parse_entities(payload: &Value) -> Result<Vec<EntitySpan>, NerError> {
    let payload: Payload =
        serde_json::from_value(payload.clone()).map_err(|e| NerError::Malformed(e.to_string()))?;
    let doc = payload
        .documents
        .into_iter()
        .next()
        .ok_or_else(|| NerError::Malformed("no documents in response".into()))?;
    Ok(doc
        .entities
        .into_iter()
        .map(|e| EntitySpan {
            category: match e.subcategory {
                Some(sub) if !sub.is_empty() => format!("{}-{}", e.category, sub),
                _ => e.category,
            },
            surface: e.text,
            start: e.offset,
            end: e.offset + e.length,
        })
        .collect())
}

impl NerProvider for RemoteNer {
    fn recognize(
        &self,
        text: &str,
        _categories: &EntityCategorySet,
    ) -> Result<Vec<EntitySpan>, NerError> {
        let mut req = self
            .agent
            .post(&self.endpoint)
            .query("stringIndexType", "UnicodeCodePoint");
        if let Some(key) = &self.key {
            req = req.set("Ocp-Apim-Subscription-Key", key);
        }
        match req.send_json(request_body(text, &self.language)) {
            Ok(resp) => {
                let value: Value = resp
                    .into_json()
                    .map_err(|e| NerError::Malformed(e.to_string()))?;
                parse_entities(&value)
            }
            Err(ureq::Error::Status(status, _)) if status == 429 || status >= 500 => {
                Err(NerError::Transport(format!("HTTP {status}")))
            }
            Err(ureq::Error::Status(status, _)) => Err(NerError::Config(format!("HTTP {status}"))),
            Err(ureq::Error::Transport(t)) => Err(NerError::Transport(t.kind().to_string())),
        }
    }
}
