//! Completion caches keyed by [`super::cache_key`].

use std::collections::HashMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache I/O: {0}")]
    Io(#[from] io::Error),
    #[error("corrupt cache entry {key}: {reason}")]
    Corrupt { key: String, reason: String },
}

pub trait CompletionCache: Send + Sync {
    fn get(&self, key: &str) -> Result<Option<String>, CacheError>;
    fn put(&self, key: &str, completion: &str) -> Result<(), CacheError>;
}

#[derive(Debug, Default)]
pub struct MemoryCache {
    entries: Mutex<HashMap<String, String>>,
}

impl MemoryCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl CompletionCache for MemoryCache {
    fn get(&self, key: &str) -> Result<Option<String>, CacheError> {
        Ok(self.entries.lock().unwrap().get(key).cloned())
    }

    fn put(&self, key: &str, completion: &str) -> Result<(), CacheError> {
        self.entries
            .lock()
            .unwrap()
            .insert(key.to_string(), completion.to_string());
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Entry {
    key: String,
    completion: String,
}

/// One `<digest>.json` file per completion.
#[derive(Debug)]
pub struct DirCache {
    dir: PathBuf,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl DirCache {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        self.locks
            .lock()
            .unwrap()
            .entry(key.to_string())
            .or_default()
            .clone()
    }
}

impl CompletionCache for DirCache {
    fn get(&self, key: &str) -> Result<Option<String>, CacheError> {
        let raw = match fs::read(self.entry_path(key)) {
            Ok(raw) => raw,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let corrupt = |reason: String| CacheError::Corrupt {
            key: key.to_string(),
            reason,
        };
        let entry: Entry = serde_json::from_slice(&raw).map_err(|e| corrupt(e.to_string()))?;
        if entry.key != key {
            return Err(corrupt(format!("entry holds key {}", entry.key)));
        }
        Ok(Some(entry.completion))
    }

    fn put(&self, key: &str, completion: &str) -> Result<(), CacheError> {
        let lock = self.key_lock(key);
        let _guard = lock.lock().unwrap();
        let body = serde_json::to_vec(&Entry {
            key: key.to_string(),
            completion: completion.to_string(),
        })
        .expect("entry serializes");
        let tmp = self
            .dir
            .join(format!(".{key}.{:?}.tmp", std::thread::current().id()));
        fs::write(&tmp, body)?;
        fs::rename(&tmp, self.entry_path(key))?;
        Ok(())
    }
}
