//! Provider-agnostic chat completion: prompt rendering, retries with
//! exponential backoff, and a content-addressed completion cache.

pub mod cache;
pub mod remote;
pub mod scripted;
pub mod template;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::GenerationParams;

pub use cache::{CacheError, CompletionCache, DirCache, MemoryCache};
pub use remote::RemoteProvider;
pub use scripted::{RecordingProvider, ScriptedProvider};
pub use template::{render_messages, PromptTemplate, TemplateError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn new(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ProviderError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("rate limited (HTTP 429)")]
    RateLimited,
    #[error("server error (HTTP {status})")]
    Server { status: u16 },
    #[error("request rejected (HTTP {status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("provider refused: {0}")]
    Refusal(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("unscripted request {digest}")]
    Unscripted { digest: String },
    #[error("provider configuration: {0}")]
    Config(String),
}

impl ProviderError {
    /// Transport failures, rate limits and 5xx responses are worth retrying.
    pub fn is_transient(&self) -> bool {
        matches!(
            self,
            ProviderError::Transport(_) | ProviderError::RateLimited | ProviderError::Server { .. }
        )
    }
}

/// Given messages and sampling parameters, returns the completion text.
pub trait CompletionProvider: Send + Sync {
    fn complete(
        &self,
        messages: &[Message],
        params: &GenerationParams,
    ) -> Result<String, ProviderError>;
}

impl<F> CompletionProvider for F
where
    F: Fn(&[Message], &GenerationParams) -> Result<String, ProviderError> + Send + Sync,
{
    fn complete(
        &self,
        messages: &[Message],
        params: &GenerationParams,
    ) -> Result<String, ProviderError> {
        self(messages, params)
    }
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for Arc<P> {
    fn complete(
        &self,
        messages: &[Message],
        params: &GenerationParams,
    ) -> Result<String, ProviderError> {
        (**self).complete(messages, params)
    }
}

fn hash_messages(h: &mut Sha256, messages: &[Message]) {
    h.update((messages.len() as u64).to_le_bytes());
    for m in messages {
        h.update(m.role.as_str().as_bytes());
        h.update([0u8]);
        h.update((m.content.len() as u64).to_le_bytes());
        h.update(m.content.as_bytes());
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 over the ordered `(role, content)` pairs.
pub fn messages_digest(messages: &[Message]) -> String {
    let mut h = Sha256::new();
    hash_messages(&mut h, messages);
    hex(&h.finalize())
}

/// SHA-256 over the ordered messages and all five generation parameters.
pub fn cache_key(messages: &[Message], params: &GenerationParams) -> String {
    let mut h = Sha256::new();
    hash_messages(&mut h, messages);
    h.update(b"params");
    h.update(params.temperature.to_bits().to_le_bytes());
    h.update(params.top_p.to_bits().to_le_bytes());
    h.update(params.max_tokens.to_le_bytes());
    h.update(params.frequency_penalty.to_bits().to_le_bytes());
    h.update(params.presence_penalty.to_bits().to_le_bytes());
    hex(&h.finalize())
}

/// Rough token count: one token per four characters, rounded up.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

pub fn estimate_message_tokens(messages: &[Message]) -> usize {
    messages.iter().map(|m| estimate_tokens(&m.content)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
    /// Scale each delay by a random factor in [0.75, 1.25).
    pub jitter: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay_ms: 500,
            max_delay_ms: 20_000,
            jitter: true,
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_attempts: u32) -> Self {
        Self {
            max_attempts,
            base_delay_ms: 0,
            max_delay_ms: 0,
            jitter: false,
        }
    }

    /// Delay before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let base = self
            .base_delay_ms
            .saturating_mul(1u64 << retry.min(20))
            .min(self.max_delay_ms);
        let ms = if self.jitter && base > 0 {
            (base as f64 * rand::thread_rng().gen_range(0.75..1.25)) as u64
        } else {
            base
        };
        Duration::from_millis(ms)
    }
}

/// Calls `provider`, retrying transient failures per `policy`.
pub fn complete(
    provider: &dyn CompletionProvider,
    messages: &[Message],
    params: &GenerationParams,
    policy: &RetryPolicy,
) -> Result<String, ProviderError> {
    complete_counted(provider, messages, params, policy, None)
}

fn complete_counted(
    provider: &dyn CompletionProvider,
    messages: &[Message],
    params: &GenerationParams,
    policy: &RetryPolicy,
    stats: Option<&ClientStats>,
) -> Result<String, ProviderError> {
    let attempts = policy.max_attempts.max(1);
    let mut attempt = 0;
    loop {
        if let Some(s) = stats {
            s.provider_calls.fetch_add(1, Ordering::Relaxed);
        }
        match provider.complete(messages, params) {
            Ok(text) => return Ok(text),
            Err(e) if e.is_transient() && attempt + 1 < attempts => {
                let delay = policy.delay(attempt);
                tracing::warn!(attempt = attempt + 1, ?delay, error = %e, "transient provider failure, retrying");
                if let Some(s) = stats {
                    s.retries.fetch_add(1, Ordering::Relaxed);
                }
                std::thread::sleep(delay);
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

/// Cache hits skip the provider; misses (and unreadable entries) call
/// [`complete`] and store the result. Cache failures never fail the call.
pub fn cached_complete(
    provider: &dyn CompletionProvider,
    cache: &dyn CompletionCache,
    messages: &[Message],
    params: &GenerationParams,
    policy: &RetryPolicy,
) -> Result<String, ProviderError> {
    cached_complete_counted(provider, cache, messages, params, policy, None)
}

fn cached_complete_counted(
    provider: &dyn CompletionProvider,
    cache: &dyn CompletionCache,
    messages: &[Message],
    params: &GenerationParams,
    policy: &RetryPolicy,
    stats: Option<&ClientStats>,
) -> Result<String, ProviderError> {
    let key = cache_key(messages, params);
    match cache.get(&key) {
        Ok(Some(hit)) => {
            if let Some(s) = stats {
                s.cache_hits.fetch_add(1, Ordering::Relaxed);
            }
            return Ok(hit);
        }
        Ok(None) => {}
        Err(e) => tracing::warn!(error = %e, "cache read failed, treating as miss"),
    }
    let text = complete_counted(provider, messages, params, policy, stats)?;
    if let Err(e) = cache.put(&key, &text) {
        tracing::warn!(error = %e, "cache write failed");
    }
    Ok(text)
}

#[derive(Debug, Default)]
pub struct ClientStats {
    provider_calls: AtomicU64,
    cache_hits: AtomicU64,
    retries: AtomicU64,
}

impl ClientStats {
    /// Provider invocations, counting each retry attempt.
    pub fn provider_calls(&self) -> u64 {
        self.provider_calls.load(Ordering::Relaxed)
    }

    pub fn cache_hits(&self) -> u64 {
        self.cache_hits.load(Ordering::Relaxed)
    }

    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }
}

/// A provider bundled with its parameters, retry policy, and optional cache.
#[derive(Clone)]
pub struct CompletionClient {
    provider: Arc<dyn CompletionProvider>,
    cache: Option<Arc<dyn CompletionCache>>,
    params: GenerationParams,
    retry: RetryPolicy,
    stats: Arc<ClientStats>,
}

impl CompletionClient {
    pub fn new(provider: Arc<dyn CompletionProvider>) -> Self {
        Self {
            provider,
            cache: None,
            params: GenerationParams::default(),
            retry: RetryPolicy::default(),
            stats: Arc::default(),
        }
    }

    pub fn with_cache(mut self, cache: Arc<dyn CompletionCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_params(mut self, params: GenerationParams) -> Self {
        self.params = params;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn params(&self) -> &GenerationParams {
        &self.params
    }

    pub fn stats(&self) -> &ClientStats {
        &self.stats
    }

    pub fn complete(&self, messages: &[Message]) -> Result<String, ProviderError> {
        match &self.cache {
            Some(cache) => cached_complete_counted(
                self.provider.as_ref(),
                cache.as_ref(),
                messages,
                &self.params,
                &self.retry,
                Some(&self.stats),
            ),
            None => complete_counted(
                self.provider.as_ref(),
                messages,
                &self.params,
                &self.retry,
                Some(&self.stats),
            ),
        }
    }

    /// Skips the cache read but refreshes the entry with the new completion.
    pub fn complete_fresh(&self, messages: &[Message]) -> Result<String, ProviderError> {
        let text = complete_counted(
            self.provider.as_ref(),
            messages,
            &self.params,
            &self.retry,
            Some(&self.stats),
        )?;
        if let Some(cache) = &self.cache {
            if let Err(e) = cache.put(&cache_key(messages, &self.params), &text) {
                tracing::warn!(error = %e, "cache write failed");
            }
        }
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::atomic::AtomicUsize;
    use std::sync::Mutex;

    fn msgs(a: &str, b: &str) -> Vec<Message> {
        vec![
            Message::new(Role::System, "sys"),
            Message::new(Role::User, a),
            Message::new(Role::User, b),
        ]
    }

    #[test]
    fn key_properties() {
        let p = GenerationParams::default();
        assert_eq!(
            cache_key(&msgs("a", "b"), &p),
            cache_key(&msgs("a", "b"), &p)
        );
        let warm = GenerationParams {
            temperature: 0.5,
            ..p
        };
        assert_ne!(
            cache_key(&msgs("a", "b"), &p),
            cache_key(&msgs("a", "b"), &warm)
        );
        assert_ne!(
            cache_key(&msgs("a", "b"), &p),
            cache_key(&msgs("b", "a"), &p)
        );
        assert_ne!(
            cache_key(&msgs("a", "b"), &p),
            cache_key(&msgs("a", "c"), &p)
        );
        // role participates
        let user = vec![Message::new(Role::User, "x")];
        let asst = vec![Message::new(Role::Assistant, "x")];
        assert_ne!(messages_digest(&user), messages_digest(&asst));
        // content boundaries participate
        assert_ne!(
            messages_digest(&[
                Message::new(Role::User, "ab"),
                Message::new(Role::User, "c")
            ]),
            messages_digest(&[
                Message::new(Role::User, "a"),
                Message::new(Role::User, "bc")
            ])
        );
    }

    #[test]
    fn every_param_changes_the_key() {
        let p = GenerationParams::default();
        let m = msgs("a", "b");
        let base = cache_key(&m, &p);
        for q in [
            GenerationParams { top_p: 0.7, ..p },
            GenerationParams {
                max_tokens: 10,
                ..p
            },
            GenerationParams {
                frequency_penalty: 0.1,
                ..p
            },
            GenerationParams {
                presence_penalty: 0.1,
                ..p
            },
        ] {
            assert_ne!(base, cache_key(&m, &q));
        }
    }

    #[test]
    fn token_estimate() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
    }

    #[test]
    fn retries_transient_then_succeeds() {
        let calls = AtomicUsize::new(0);
        let flaky = |_: &[Message], _: &GenerationParams| {
            if calls.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(ProviderError::RateLimited)
            } else {
                Ok("done".to_string())
            }
        };
        let out = complete(
            &flaky,
            &msgs("a", "b"),
            &GenerationParams::default(),
            &RetryPolicy::immediate(3),
        );
        assert_eq!(out.unwrap(), "done");
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn gives_up_after_cap_and_on_permanent_errors() {
        let calls = AtomicUsize::new(0);
        let down = |_: &[Message], _: &GenerationParams| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err::<String, _>(ProviderError::Server { status: 503 })
        };
        let err = complete(
            &down,
            &msgs("a", "b"),
            &GenerationParams::default(),
            &RetryPolicy::immediate(3),
        );
        assert_eq!(err, Err(ProviderError::Server { status: 503 }));
        assert_eq!(calls.load(Ordering::SeqCst), 3);

        let calls = AtomicUsize::new(0);
        let refuse = |_: &[Message], _: &GenerationParams| {
            calls.fetch_add(1, Ordering::SeqCst);
            Err::<String, _>(ProviderError::Refusal("no".into()))
        };
        assert!(complete(
            &refuse,
            &msgs("a", "b"),
            &GenerationParams::default(),
            &RetryPolicy::immediate(3)
        )
        .is_err());
        assert_eq!(calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn backoff_grows_and_caps() {
        let p = RetryPolicy {
            max_attempts: 5,
            base_delay_ms: 100,
            max_delay_ms: 300,
            jitter: false,
        };
        assert_eq!(p.delay(0), Duration::from_millis(100));
        assert_eq!(p.delay(1), Duration::from_millis(200));
        assert_eq!(p.delay(2), Duration::from_millis(300));
        let j = RetryPolicy { jitter: true, ..p };
        let d = j.delay(0).as_millis();
        assert!((75..125).contains(&d));
    }

    #[test]
    fn cache_short_circuits() {
        let calls = AtomicUsize::new(0);
        let provider = |m: &[Message], p: &GenerationParams| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok(format!("{}@{}", m[1].content, p.temperature))
        };
        let cache = MemoryCache::new();
        let p = GenerationParams::default();
        let r = RetryPolicy::immediate(1);
        let a = cached_complete(&provider, &cache, &msgs("a", "b"), &p, &r).unwrap();
        let b = cached_complete(&provider, &cache, &msgs("a", "b"), &p, &r).unwrap();
        assert_eq!(a, b);
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        let warm = GenerationParams {
            temperature: 0.5,
            ..p
        };
        cached_complete(&provider, &cache, &msgs("a", "b"), &warm, &r).unwrap();
        assert_eq!(calls.load(Ordering::SeqCst), 2);
        // transparency against an uncached call
        assert_eq!(a, complete(&provider, &msgs("a", "b"), &p, &r).unwrap());
    }

    #[test]
    fn corrupt_entry_is_recomputed() {
        let dir = tempfile::tempdir().unwrap();
        let cache = DirCache::open(dir.path()).unwrap();
        let p = GenerationParams::default();
        let m = msgs("a", "b");
        std::fs::write(cache.entry_path(&cache_key(&m, &p)), b"\x00garbage").unwrap();
        let calls = AtomicUsize::new(0);
        let provider = |_: &[Message], _: &GenerationParams| {
            calls.fetch_add(1, Ordering::SeqCst);
            Ok("fresh".to_string())
        };
        let out = cached_complete(&provider, &cache, &m, &p, &RetryPolicy::immediate(1)).unwrap();
        assert_eq!(out, "fresh");
        assert_eq!(calls.load(Ordering::SeqCst), 1);
        assert_eq!(
            cache.get(&cache_key(&m, &p)).unwrap().as_deref(),
            Some("fresh")
        );
    }

    #[test]
    fn client_counts_and_refreshes() {
        let seq = Mutex::new(vec!["second".to_string(), "first".to_string()]);
        let provider =
            move |_: &[Message], _: &GenerationParams| Ok(seq.lock().unwrap().pop().unwrap());
        let client = CompletionClient::new(Arc::new(provider))
            .with_cache(Arc::new(MemoryCache::new()))
            .with_retry(RetryPolicy::immediate(1));
        let m = msgs("a", "b");
        assert_eq!(client.complete(&m).unwrap(), "first");
        assert_eq!(client.complete(&m).unwrap(), "first");
        assert_eq!(client.complete_fresh(&m).unwrap(), "second");
        assert_eq!(client.complete(&m).unwrap(), "second");
        assert_eq!(client.stats().provider_calls(), 2);
        assert_eq!(client.stats().cache_hits(), 2);
    }
}
