//! JSON run configuration. Every section is optional; missing fields take
//! the defaults below. Secrets are read from the environment only.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::inference::remote::{AuthStyle, API_KEY_ENV, ENDPOINT_ENV};
use crate::inference::{
    CompletionClient, CompletionProvider, DirCache, RemoteProvider, RetryPolicy, ScriptedProvider,
};
use crate::mitigation::Mitigator;
use crate::model::GenerationParams;
use crate::ner::remote::{NER_ENDPOINT_ENV, NER_KEY_ENV};
use crate::ner::{EntityCategorySet, NerProvider, OfflineNer, RemoteNer};
use crate::pipeline::{Detector, DetectorSettings, PromptSet};
use crate::selector::{SelectorConfig, SentenceSplitter};
use crate::sentence::DetectionMode;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Remote,
    /// Replays completions from a `{"digest","completion"}` JSONL file.
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub auth: AuthStyle,
    pub timeout_secs: u64,
    pub params: GenerationParams,
    pub retry: RetryPolicy,
    pub script: Option<PathBuf>,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Remote,
            endpoint: None,
            model: None,
            auth: AuthStyle::default(),
            timeout_secs: 300,
            params: GenerationParams::default(),
            retry: RetryPolicy::default(),
            script: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NerKind {
    #[default]
    Offline,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NerConfig {
    pub provider: NerKind,
    pub endpoint: Option<String>,
    pub language: String,
    pub categories: EntityCategorySet,
    pub gazetteer_dir: Option<PathBuf>,
}

impl Default for NerConfig {
    fn default() -> Self {
        Self {
            provider: NerKind::Offline,
            endpoint: None,
            language: "en".into(),
            categories: EntityCategorySet::default(),
            gazetteer_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelectorSection {
    pub min_tokens: usize,
    pub bypass_max_sentences: usize,
    pub purge_enabled: bool,
    pub abbreviations_file: Option<PathBuf>,
}

impl Default for SelectorSection {
    fn default() -> Self {
        let d = SelectorConfig::default();
        Self {
            min_tokens: d.min_tokens,
            bypass_max_sentences: d.bypass_max_sentences,
            purge_enabled: d.purge_enabled,
            abbreviations_file: None,
        }
    }
}

impl SelectorSection {
    pub fn selector(&self) -> SelectorConfig {
        SelectorConfig {
            min_tokens: self.min_tokens,
            bypass_max_sentences: self.bypass_max_sentences,
            purge_enabled: self.purge_enabled,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub workers: usize,
    pub cache_dir: Option<PathBuf>,
    /// Model context window; the prompt budget is this minus `max_tokens`.
    pub context_tokens: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            workers: 4,
            cache_dir: None,
            context_tokens: 16_384,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptConfig {
    /// Replaces the date quoted in the detection rules.
    pub today: Option<String>,
    /// Use the typo-corrected rewrite prompt.
    pub normalized_mitigation: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub provider: ProviderConfig,
    pub ner: NerConfig,
    pub selector: SelectorSection,
    pub pipeline: PipelineConfig,
    pub prompts: PromptConfig,
    pub mode: DetectionMode,
}

impl Config {
    pub fn from_json(text: &str, origin: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            let inner = e.into_inner();
            if inner.is_syntax() || inner.is_eof() || path == "." {
                ConfigError::Parse {
                    path: origin.to_string(),
                    message: inner.to_string(),
                }
            } else {
                ConfigError::Invalid {
                    field: path,
                    message: inner.to_string(),
                }
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads, applies environment overrides, and validates.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cfg = Self::from_json(&text, &path.display().to_string())?;
        cfg.apply_env();
        Ok(cfg)
    }

    /// Endpoint variables win over file values.
    pub fn apply_env(&mut self) {
        if let Ok(v) = std::env::var(ENDPOINT_ENV) {
            if !v.is_empty() {
                self.provider.endpoint = Some(v);
            }
        }
        if let Ok(v) = std::env::var(NER_ENDPOINT_ENV) {
            if !v.is_empty() {
                self.ner.endpoint = Some(v);
            }
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if let Err((field, msg)) = self.provider.params.validate() {
            return Err(invalid(&format!("provider.params.{field}"), msg));
        }
        if self.provider.retry.max_attempts == 0 {
            return Err(invalid("provider.retry.max_attempts", "must be >= 1"));
        }
        if self.provider.timeout_secs == 0 {
            return Err(invalid("provider.timeout_secs", "must be > 0"));
        }
        if self.provider.kind == ProviderKind::Scripted && self.provider.script.is_none() {
            return Err(invalid(
                "provider.script",
                "required when provider.kind is \"scripted\"",
            ));
        }
        if self.pipeline.workers == 0 {
            return Err(invalid("pipeline.workers", "must be >= 1"));
        }
        if self.pipeline.context_tokens <= self.provider.params.max_tokens as usize {
            return Err(invalid(
                "pipeline.context_tokens",
                format!(
                    "must exceed provider.params.max_tokens ({})",
                    self.provider.params.max_tokens
                ),
            ));
        }
        if self.ner.language.trim().is_empty() {
            return Err(invalid("ner.language", "must not be empty"));
        }
        Ok(())
    }

    pub fn max_prompt_tokens(&self) -> usize {
        self.pipeline.context_tokens - self.provider.params.max_tokens as usize
    }

    pub fn prompt_set(&self) -> PromptSet {
        PromptSet::new(
            self.prompts.today.as_deref(),
            self.prompts.normalized_mitigation,
        )
    }

    pub fn splitter(&self) -> Result<SentenceSplitter, ConfigError> {
        match &self.selector.abbreviations_file {
            Some(p) => SentenceSplitter::from_file(p)
                .map_err(|e| invalid("selector.abbreviations_file", e.to_string())),
            None => Ok(SentenceSplitter::default()),
        }
    }

    pub fn detector_settings(&self) -> DetectorSettings {
        DetectorSettings {
            selector: self.selector.selector(),
            mode: self.mode,
            max_prompt_tokens: self.max_prompt_tokens(),
            categories: self.ner.categories.clone(),
            prompts: self.prompt_set(),
            ner_retry: self.provider.retry,
        }
    }

    pub fn completion_provider(&self) -> Result<Arc<dyn CompletionProvider>, ConfigError> {
        match self.provider.kind {
            ProviderKind::Remote => {
                let endpoint = self.provider.endpoint.clone().ok_or_else(|| {
                    invalid(
                        "provider.endpoint",
                        format!("not set (set it in the config or via {ENDPOINT_ENV})"),
                    )
                })?;
                let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
                Ok(Arc::new(
                    RemoteProvider::new(endpoint, key)
                        .with_auth(self.provider.auth)
                        .with_model(self.provider.model.clone())
                        .with_timeout(Duration::from_secs(self.provider.timeout_secs)),
                ))
            }
            ProviderKind::Scripted => {
                let path = self.provider.script.as_ref().expect("validated");
                let scripted = ScriptedProvider::from_jsonl(path)
                    .map_err(|e| invalid("provider.script", e.to_string()))?;
                Ok(Arc::new(scripted))
            }
        }
    }

    pub fn ner_provider(&self) -> Result<Arc<dyn NerProvider>, ConfigError> {
        match self.ner.provider {
            NerKind::Offline => match &self.ner.gazetteer_dir {
                Some(dir) => OfflineNer::from_gazetteer_dir(dir)
                    .map(|n| Arc::new(n) as Arc<dyn NerProvider>)
                    .map_err(|e| invalid("ner.gazetteer_dir", e.to_string())),
                None => Ok(Arc::new(OfflineNer::new())),
            },
            NerKind::Remote => {
                let endpoint = self.ner.endpoint.clone().ok_or_else(|| {
                    invalid(
                        "ner.endpoint",
                        format!("not set (set it in the config or via {NER_ENDPOINT_ENV})"),
                    )
                })?;
                let key = std::env::var(NER_KEY_ENV).ok().filter(|k| !k.is_empty());
                Ok(Arc::new(
                    RemoteNer::new(endpoint, key).with_language(self.ner.language.clone()),
                ))
            }
        }
    }

    /// Client over `provider`, with this config's params, retry and cache.
    pub fn client_with(
        &self,
        provider: Arc<dyn CompletionProvider>,
    ) -> Result<CompletionClient, ConfigError> {
        let mut client = CompletionClient::new(provider)
            .with_params(self.provider.params)
            .with_retry(self.provider.retry);
        if let Some(dir) = &self.pipeline.cache_dir {
            let cache =
                DirCache::open(dir).map_err(|e| invalid("pipeline.cache_dir", e.to_string()))?;
            client = client.with_cache(Arc::new(cache));
        }
        Ok(client)
    }

    /// Everything a run needs, built from this config.
    pub fn runtime(&self) -> Result<Runtime, ConfigError> {
        let client = self.client_with(self.completion_provider()?)?;
        self.runtime_with(client, self.ner_provider()?)
    }

    pub fn runtime_with(
        &self,
        client: CompletionClient,
        ner: Arc<dyn NerProvider>,
    ) -> Result<Runtime, ConfigError> {
        let splitter = self.splitter()?;
        let settings = self.detector_settings();
        let mut mitigator = Mitigator::new(settings.prompts.mitigation.clone());
        mitigator.splitter = splitter.clone();
        mitigator.selector = settings.selector.clone();
        Ok(Runtime {
            detector: Detector::new(client.clone(), ner, settings),
            mitigator,
            client,
            splitter,
            workers: self.pipeline.workers,
        })
    }
}

/// Configured components for one run.
#[derive(Clone)]
pub struct Runtime {
    pub detector: Detector,
    pub mitigator: Mitigator,
    pub client: CompletionClient,
    pub splitter: SentenceSplitter,
    pub workers: usize,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_defaults() {
        let cfg = Config::from_json("{}", "t").unwrap();
        assert_eq!(cfg.provider.params.temperature, 0.0);
        assert_eq!(cfg.provider.params.top_p, 0.6);
        assert_eq!(cfg.ner.categories.len(), 9);
        assert_eq!(cfg.mode, DetectionMode::Production);
        assert_eq!(cfg.max_prompt_tokens(), 16_384 - 4_096);
    }

    #[test]
    fn path_qualified_errors() {
        let err =
            Config::from_json(r#"{"provider":{"params":{"temperature":-1}}}"#, "t").unwrap_err();
        assert!(
            err.to_string().starts_with("provider.params.temperature:"),
            "{err}"
        );
        let err = Config::from_json(r#"{"provider":{"params":{"temp":0}}}"#, "t").unwrap_err();
        assert!(
            err.to_string().starts_with("provider.params.temp:"),
            "{err}"
        );
        let err = Config::from_json(r#"{"pipeline":{"workers":0}}"#, "t").unwrap_err();
        assert!(err.to_string().starts_with("pipeline.workers:"), "{err}");
        let err = Config::from_json(r#"{"ner":{"categories":["Planet"]}}"#, "t").unwrap_err();
        assert!(err.to_string().starts_with("ner.categories"), "{err}");
        let err = Config::from_json(r#"{"provider":{"kind":"scripted"}}"#, "t").unwrap_err();
        assert!(err.to_string().starts_with("provider.script:"), "{err}");
        assert!(matches!(
            Config::from_json("{", "t"),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn benchmark_mode_and_prompts() {
        let cfg = Config::from_json(
            r#"{"mode":"benchmark","prompts":{"today":"May 1st, 2024","normalized_mitigation":true}}"#,
            "t",
        )
        .unwrap();
        assert_eq!(cfg.detector_settings().mode, DetectionMode::Benchmark);
        assert_eq!(cfg.prompt_set().mitigation.id(), "mitigation-normalized");
    }

    #[test]
    fn remote_provider_needs_endpoint() {
        let mut cfg = Config::default();
        cfg.provider.endpoint = None;
        if std::env::var(ENDPOINT_ENV).is_err() {
            let err = cfg.completion_provider().err().unwrap();
            assert!(err.to_string().starts_with("provider.endpoint:"));
        }
    }

    #[test]
    fn load_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"pipeline":{"workers":8}}"#).unwrap();
        assert_eq!(Config::load(&p).unwrap().pipeline.workers, 8);
        assert!(matches!(
            Config::load(dir.path().join("missing.json")),
            Err(ConfigError::Io { .. })
        ));
    }
}
