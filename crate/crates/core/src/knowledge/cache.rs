use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::ExternalKnowledge;
use crate::error::{Error, Result};

/// Append-only JSONL cache of retrieval results keyed by tweet id. A later
/// line for the same id replaces an earlier one when the file is reloaded.
#[derive(Debug)]
pub struct EkCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, ExternalKnowledge>>,
}

impl EkCache {
    pub fn in_memory() -> Self {
        Self { path: None, entries: Mutex::new(HashMap::new()) }
    }

    /// Opens (or starts) the cache file; unreadable lines are skipped.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                match serde_json::from_str::<ExternalKnowledge>(&line) {
                    Ok(ek) => {
                        entries.insert(ek.tweet_id.clone(), ek);
                    }
                    Err(e) if !line.trim().is_empty() => log::warn!("{}:{}: {e}", path.display(), i + 1),
                    Err(_) => {}
                }
            }
        }
        Ok(Self { path: Some(path.to_path_buf()), entries: Mutex::new(entries) })
    }

    pub fn get(&self, tweet_id: &str) -> Option<ExternalKnowledge> {
        self.entries.lock().expect("cache lock").get(tweet_id).cloned()
    }

    pub fn put(&self, ek: &ExternalKnowledge) -> Result<()> {
        let mut entries = self.entries.lock().expect("cache lock");
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(|e| Error::io(path, e))?;
            let mut line = serde_json::to_string(ek)?;
            line.push('\n');
            f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
        }
        entries.insert(ek.tweet_id.clone(), ek.clone());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
