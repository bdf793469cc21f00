//! Offline providers: canned completions keyed by prompt digest, and a
//! recorder that captures fixtures from another provider.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{self, BufRead, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{messages_digest, CompletionProvider, Message, ProviderError};
use crate::model::GenerationParams;

#[derive(Debug, Serialize, Deserialize)]
struct FixtureLine {
    digest: String,
    completion: String,
}

/// Answers only prompts it has a fixture for.
#[derive(Debug, Default, Clone)]
pub struct ScriptedProvider {
    fixtures: HashMap<String, String>,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, messages: &[Message], completion: impl Into<String>) {
        self.fixtures
            .insert(messages_digest(messages), completion.into());
    }

    pub fn insert_digest(&mut self, digest: impl Into<String>, completion: impl Into<String>) {
        self.fixtures.insert(digest.into(), completion.into());
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }

    /// Loads `{"digest","completion"}` lines.
    pub fn from_jsonl(path: impl AsRef<Path>) -> io::Result<Self> {
        let file = fs::File::open(path)?;
        let mut fixtures = HashMap::new();
        for (n, line) in io::BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: FixtureLine = serde_json::from_str(&line).map_err(|e| {
                io::Error::new(
                    io::ErrorKind::InvalidData,
                    format!("fixture line {}: {e}", n + 1),
                )
            })?;
            fixtures.insert(f.digest, f.completion);
        }
        Ok(Self { fixtures })
    }
}

impl CompletionProvider for ScriptedProvider {
    fn complete(
        &self,
        messages: &[Message],
        _params: &GenerationParams,
    ) -> Result<String, ProviderError> {
        let digest = messages_digest(messages);
        self.fixtures
            .get(&digest)
            .cloned()
            .ok_or(ProviderError::Unscripted { digest })
    }
}

/// Forwards to `inner` and remembers every successful completion.
pub struct RecordingProvider<P> {
    inner: P,
    seen: Mutex<BTreeMap<String, String>>,
}

impl<P: CompletionProvider> RecordingProvider<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            seen: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn to_scripted(&self) -> ScriptedProvider {
        ScriptedProvider {
            fixtures: self.seen.lock().unwrap().clone().into_iter().collect(),
        }
    }

    /// Writes the captured fixtures sorted by digest.
    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut out = io::BufWriter::new(fs::File::create(path)?);
        for (digest, completion) in self.seen.lock().unwrap().iter() {
            let line = serde_json::to_string(&FixtureLine {
                digest: digest.clone(),
                completion: completion.clone(),
            })
            .expect("fixture serializes");
            writeln!(out, "{line}")?;
        }
        out.flush()
    }
}

impl<P: CompletionProvider> CompletionProvider for RecordingProvider<P> {
    fn complete(
        &self,
        messages: &[Message],
        params: &GenerationParams,
    ) -> Result<String, ProviderError> {
        let text = self.inner.complete(messages, params)?;
        self.seen
            .lock()
            .unwrap()
            .insert(messages_digest(messages), text.clone());
        Ok(text)
    }
}
