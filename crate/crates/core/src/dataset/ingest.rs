//! JSONL reading and writing with per-line error reporting.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::records::{SupportStatement, TweetRecord, UserRecord};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    /// 1-based line number.
    pub line: usize,
    pub message: String,
}

#[derive(Clone, Debug)]
pub struct Ingested<T> {
    pub records: Vec<T>,
    pub errors: Vec<LineError>,
}

pub trait Record: DeserializeOwned {
    fn check(&self) -> Result<()>;
    fn key(&self) -> Option<&str> {
        None
    }
}

impl Record for TweetRecord {
    fn check(&self) -> Result<()> {
        self.validate()
    }
    fn key(&self) -> Option<&str> {
        Some(&self.tweet_id)
    }
}

impl Record for UserRecord {
    fn check(&self) -> Result<()> {
        self.validate()
    }
    fn key(&self) -> Option<&str> {
        Some(&self.user_id)
    }
}

impl Record for SupportStatement {
    fn check(&self) -> Result<()> {
        self.validate()
    }
    fn key(&self) -> Option<&str> {
        Some(&self.statement_id)
    }
}

/// Reads one record per non-blank line. A missing file is an error; a bad or
/// duplicate line is recorded and skipped.
pub fn read_jsonl<T: Record>(path: &Path) -> Result<Ingested<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed = serde_json::from_str::<T>(&line)
            .map_err(Error::from)
            .and_then(|r| r.check().map(|_| r));
        match parsed {
            Ok(r) => {
                if let Some(key) = r.key() {
                    if !seen.insert(key.to_string()) {
                        errors.push(LineError { line: i + 1, message: format!("duplicate id {key}") });
                        continue;
                    }
                }
                records.push(r);
            }
            Err(e) => errors.push(LineError { line: i + 1, message: e.to_string() }),
        }
    }
    Ok(Ingested { records, errors })
}

pub fn ingest_tweets(path: &Path) -> Result<Ingested<TweetRecord>> {
    read_jsonl(path)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
