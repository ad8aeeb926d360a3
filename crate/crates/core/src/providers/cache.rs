//! Append-only JSONL response cache.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{normalize_query, ProviderError, ProviderRequest, ProviderResponse};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub response: ProviderResponse,
    pub model_name: String,
    /// Unix seconds.
    pub stored_at: u64,
    /// Reserved; nothing computes it yet.
    #[serde(default)]
    pub quality_score: Option<f64>,
}

/// Response store with an in-memory index rebuilt from the file on open.
///
/// Reads share the index; writes and file appends are serialized. A per-key
/// lock makes concurrent misses on one key wait for the first to finish, so
/// the inner backend sees at most one invocation per key.
#[derive(Debug, Default)]
pub struct CacheStore {
    path: Option<PathBuf>,
    index: RwLock<HashMap<String, CacheEntry>>,
    file: Mutex<Option<File>>,
    key_locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

fn store_err(path: &Path, detail: impl std::fmt::Display) -> ProviderError {
    ProviderError::Store(format!("{}: {detail}", path.display()))
}

impl CacheStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens or creates the store file. Any unparsable line is an error: a
    /// damaged store must not silently degrade into misses.
    pub fn open(path: &Path) -> Result<Self, ProviderError> {
        let mut index = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(|e| store_err(path, e))?);
            for (lineno, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| store_err(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry = serde_json::from_str(&line)
                    .map_err(|e| store_err(path, format!("line {}: {e}", lineno + 1)))?;
                index.insert(entry.key.clone(), entry);
            }
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| store_err(path, e))?;
        Ok(Self {
            path: Some(path.to_path_buf()),
            index: RwLock::new(index),
            file: Mutex::new(Some(file)),
            key_locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn len(&self) -> usize {
        self.index.read().expect("cache index poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, key: &str) -> Option<CacheEntry> {
        self.index
            .read()
            .expect("cache index poisoned")
            .get(key)
            .cloned()
    }

    pub fn insert(&self, entry: CacheEntry) -> Result<(), ProviderError> {
        let mut file = self.file.lock().expect("cache file poisoned");
        if let (Some(f), Some(path)) = (file.as_mut(), self.path.as_deref()) {
            let mut line = serde_json::to_string(&entry).map_err(|e| store_err(path, e))?;
            line.push('\n');
            f.write_all(line.as_bytes())
                .map_err(|e| store_err(path, e))?;
            f.flush().map_err(|e| store_err(path, e))?;
        }
        self.index
            .write()
            .expect("cache index poisoned")
            .insert(entry.key.clone(), entry);
        Ok(())
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        self.key_locks
            .lock()
            .expect("cache key locks poisoned")
            .entry(key.to_string())
            .or_default()
            .clone()
    }
}

/// Serves `req` from `store` when possible, otherwise calls `inner` and
/// stores a successful response. Returns the response and whether it was a
/// hit. With no store every call is a miss and nothing is written.
pub fn cache_get_or_invoke<F>(
    req: &ProviderRequest,
    store: Option<&CacheStore>,
    inner: F,
) -> Result<(ProviderResponse, bool), ProviderError>
where
    F: FnOnce() -> Result<ProviderResponse, ProviderError>,
{
    let Some(store) = store else {
        return inner().map(|r| (r, false));
    };
    let key = normalize_query(req);
    let lock = store.key_lock(&key);
    let _guard = lock.lock().expect("cache key lock poisoned");
    if let Some(entry) = store.get(&key) {
        return Ok((entry.response, true));
    }
    let response = inner()?;
    let stored_at = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    store.insert(CacheEntry {
        key,
        response: response.clone(),
        model_name: req.model_name.clone(),
        stored_at,
        quality_score: None,
    })?;
    Ok((response, false))
}
