//! Recorded service responses keyed by request fingerprint.
//!
//! On disk a cassette is JSONL, one `{"fingerprint": ..., "response": ...}`
//! object per line, sorted by fingerprint so that recordings are
//! reproducible regardless of call order.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::jsonl;

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    fingerprint: String,
    response: Value,
}

#[derive(Debug)]
pub struct Cassette {
    path: Option<PathBuf>,
    entries: Mutex<BTreeMap<String, Value>>,
}

impl Cassette {
    pub fn in_memory() -> Self {
        Self { path: None, entries: Mutex::new(BTreeMap::new()) }
    }

    /// Loads `path`; a missing file is an empty cassette that will be created on save.
    pub fn open(path: &Path) -> Result<Self> {
        let entries = if path.exists() {
            jsonl::read::<Entry>(path)?.into_iter().map(|e| (e.fingerprint, e.response)).collect()
        } else {
            BTreeMap::new()
        };
        Ok(Self { path: Some(path.to_path_buf()), entries: Mutex::new(entries) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, fingerprint: &str) -> Option<Value> {
        self.entries.lock().expect("cassette lock").get(fingerprint).cloned()
    }

    pub fn insert(&self, fingerprint: String, response: Value) {
        self.entries.lock().expect("cassette lock").insert(fingerprint, response);
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cassette lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn save(&self) -> Result<()> {
        let Some(path) = &self.path else { return Ok(()) };
        let entries: Vec<Entry> = self
            .entries
            .lock()
            .expect("cassette lock")
            .iter()
            .map(|(k, v)| Entry { fingerprint: k.clone(), response: v.clone() })
            .collect();
        jsonl::write(path, &entries)
    }
}
