//! Annotation sheet export/import. Sheets are CSV with a `#`-prefixed
//! instruction header; the machine label is never written to the sheet.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::agreement::krippendorff_alpha;
use super::records::{Label, TweetRecord};
use crate::error::{Error, Result};

pub const INSTRUCTIONS: &[&str] = &[
    "Label each tweet in the `annotation` column as fake or genuine; leave it blank to skip.",
    "Mark a tweet fake only when at least one of these holds:",
    "  1. it disputes or weakens a fact on the reference list compiled from official health sources;",
    "  2. it backs or amplifies a known piece of misinformation;",
    "  3. it is framed as a joke or sarcasm yet still pushes a misleading claim.",
    "Any other tweet is genuine or left blank, at your discretion.",
    "When the text alone is not enough, use the tweet and user columns for context.",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRow {
    pub tweet_id: String,
    pub text: String,
    pub user_id: String,
    pub created_at: String,
    pub hashtags: String,
    pub urls: String,
    pub media: u32,
    pub favourite_count: u64,
    pub retweet_count: u64,
    pub is_retweet: bool,
    pub annotation: String,
}

impl AnnotationRow {
    fn from_tweet(t: &TweetRecord) -> Self {
        Self {
            tweet_id: t.tweet_id.clone(),
            text: t.text.clone(),
            user_id: t.user_id.clone(),
            created_at: t.created_at.to_rfc3339(),
            hashtags: t.hashtags.join(" "),
            urls: t.urls.join(" "),
            media: t.media.total(),
            favourite_count: t.favourite_count,
            retweet_count: t.retweet_count,
            is_retweet: t.is_retweet,
            annotation: String::new(),
        }
    }
}

/// Writes the sheet and returns its path.
pub fn export_annotation_tasks(tweets: &[TweetRecord], path: &Path) -> Result<std::path::PathBuf> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for line in INSTRUCTIONS {
        writeln!(out, "# {line}").map_err(|e| Error::io(path, e))?;
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record([
        "tweet_id", "text", "user_id", "created_at", "hashtags", "urls", "media", "favourite_count", "retweet_count",
        "is_retweet", "annotation",
    ])?;
    for t in tweets {
        w.serialize(AnnotationRow::from_tweet(t))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

/// Reads an annotated sheet; blank or unrecognised annotations become `None`.
pub fn import_annotations(path: &Path) -> Result<Vec<(String, Option<Label>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(file);
    let mut out = Vec::new();
    for row in r.deserialize::<AnnotationRow>() {
        let row = row?;
        let label = row.annotation.trim().to_ascii_lowercase().parse::<Label>().ok();
        out.push((row.tweet_id, label));
    }
    Ok(out)
}

/// Alpha across annotator sheets, aligned on tweet id (union of ids; absent → missing).
pub fn sheet_agreement(sheets: &[Vec<(String, Option<Label>)>]) -> Result<f64> {
    let mut ids: Vec<&str> = Vec::new();
    let mut index: HashMap<&str, usize> = HashMap::new();
    for sheet in sheets {
        for (id, _) in sheet {
            index.entry(id.as_str()).or_insert_with(|| {
                ids.push(id);
                ids.len() - 1
            });
        }
    }
    let matrix: Vec<Vec<Option<Label>>> = sheets
        .iter()
        .map(|sheet| {
            let mut row = vec![None; ids.len()];
            for (id, label) in sheet {
                row[index[id.as_str()]] = *label;
            }
            row
        })
        .collect();
    krippendorff_alpha(&matrix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::records::LabelSource;
    use chrono::{TimeZone, Utc};

    fn tweets(n: usize) -> Vec<TweetRecord> {
        let ts = Utc.timestamp_opt(1_590_000_000, 0).unwrap();
        (0..n)
            .map(|i| {
                let label = if i % 2 == 0 { Label::Fake } else { Label::Genuine };
                TweetRecord::new(format!("{i}"), format!("tweet, \"number\" {i}\nsecond line"), "u", ts)
                    .with_label(label, LabelSource::Similarity)
            })
            .collect()
    }

    #[test]
    fn empty_export_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let p = export_annotation_tasks(&[], &dir.path().join("a.csv")).unwrap();
        let content = std::fs::read_to_string(&p).unwrap();
        assert_eq!(content.lines().filter(|l| l.starts_with('#')).count(), INSTRUCTIONS.len());
        assert_eq!(content.lines().count(), INSTRUCTIONS.len() + 1);
        assert!(import_annotations(&p).unwrap().is_empty());
    }

    #[test]
    fn machine_label_is_hidden() {
        let dir = tempfile::tempdir().unwrap();
        let p = export_annotation_tasks(&tweets(4), &dir.path().join("a.csv")).unwrap();
        let content = std::fs::read_to_string(&p).unwrap();
        assert!(!content.contains("similarity"));
        assert!(import_annotations(&p).unwrap().iter().all(|(_, l)| l.is_none()));
    }

    #[test]
    fn large_export_keeps_count() {
        let dir = tempfile::tempdir().unwrap();
        let p = export_annotation_tasks(&tweets(16_000), &dir.path().join("a.csv")).unwrap();
        assert_eq!(import_annotations(&p).unwrap().len(), 16_000);
    }

    #[test]
    fn annotated_sheet_agrees_with_itself() {
        let dir = tempfile::tempdir().unwrap();
        let p = export_annotation_tasks(&tweets(10), &dir.path().join("a.csv")).unwrap();
        // fill in the annotation column the way an annotator would
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(&p).unwrap();
        let mut rows: Vec<AnnotationRow> = r.deserialize().map(|x| x.unwrap()).collect();
        for (i, row) in rows.iter_mut().enumerate() {
            row.annotation = if i % 3 == 0 { "fake".into() } else { "genuine".into() };
        }
        let filled = dir.path().join("b.csv");
        let mut w = csv::Writer::from_path(&filled).unwrap();
        rows.iter().for_each(|row| w.serialize(row).unwrap());
        w.flush().unwrap();

        let sheet = import_annotations(&filled).unwrap();
        assert_eq!(sheet.iter().filter(|(_, l)| *l == Some(Label::Fake)).count(), 4);
        assert_eq!(sheet_agreement(&[sheet.clone(), sheet]).unwrap(), 1.0);
    }
}
