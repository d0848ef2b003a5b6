use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Binary class. Index 0 is `Fake`, the positive class for metrics.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Fake,
    Genuine,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Fake, Label::Genuine];

    pub fn index(self) -> usize {
        match self {
            Label::Fake => 0,
            Label::Genuine => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Fake
        } else {
            Label::Genuine
        }
    }

    pub fn opposite(self) -> Label {
        match self {
            Label::Fake => Label::Genuine,
            Label::Genuine => Label::Fake,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Fake => "fake",
            Label::Genuine => "genuine",
        }
    }
}

impl std::str::FromStr for Label {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "fake" => Ok(Label::Fake),
            "genuine" | "real" => Ok(Label::Genuine),
            other => Err(Error::Invalid(format!("unknown label {other:?}"))),
        }
    }
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelSource {
    UrlPropagation,
    OrgAccount,
    Similarity,
    Nli,
    Human,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaCounts {
    #[serde(default)]
    pub photo: u32,
    #[serde(default)]
    pub video: u32,
    #[serde(default)]
    pub gif: u32,
}

impl MediaCounts {
    pub fn total(&self) -> u32 {
        self.photo + self.video + self.gif
    }
}

/// One social post. Line format of the JSONL corpus files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TweetRecord {
    pub tweet_id: String,
    pub text: String,
    pub user_id: String,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub hashtags: Vec<String>,
    #[serde(default)]
    pub urls: Vec<String>,
    #[serde(default)]
    pub media: MediaCounts,
    #[serde(default)]
    pub favourite_count: u64,
    #[serde(default)]
    pub retweet_count: u64,
    #[serde(default)]
    pub is_retweet: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_source: Option<LabelSource>,
}

impl TweetRecord {
    pub fn new(tweet_id: impl Into<String>, text: impl Into<String>, user_id: impl Into<String>, created_at: DateTime<Utc>) -> Self {
        Self {
            tweet_id: tweet_id.into(),
            text: text.into(),
            user_id: user_id.into(),
            created_at,
            hashtags: Vec::new(),
            urls: Vec::new(),
            media: MediaCounts::default(),
            favourite_count: 0,
            retweet_count: 0,
            is_retweet: false,
            label: None,
            label_source: None,
        }
    }

    pub fn with_label(mut self, label: Label, source: LabelSource) -> Self {
        self.label = Some(label);
        self.label_source = Some(source);
        self
    }

    pub fn is_labelled(&self) -> bool {
        self.label.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        if self.tweet_id.trim().is_empty() {
            return Err(Error::Invalid("tweet_id is empty".into()));
        }
        if self.label.is_some() != self.label_source.is_some() {
            return Err(Error::Invalid(format!(
                "tweet {}: label and label_source must be given together",
                self.tweet_id
            )));
        }
        Ok(())
    }
}

/// Author metadata. Absent counts (protected or deleted accounts) read as zero.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UserRecord {
    pub user_id: String,
    #[serde(default)]
    pub verified: bool,
    #[serde(default)]
    pub followers_count: Option<u64>,
    #[serde(default)]
    pub favourites_count: Option<u64>,
    #[serde(default)]
    pub statuses_count: Option<u64>,
    #[serde(default)]
    pub description: Option<String>,
}

impl UserRecord {
    pub fn validate(&self) -> Result<()> {
        if self.user_id.trim().is_empty() {
            return Err(Error::Invalid("user_id is empty".into()));
        }
        Ok(())
    }
}

/// A fact-checked claim with a fixed verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupportStatement {
    pub statement_id: String,
    pub text: String,
    pub verdict: Label,
    #[serde(default)]
    pub source: String,
}

impl SupportStatement {
    pub fn validate(&self) -> Result<()> {
        if self.text.trim().is_empty() {
            return Err(Error::Invalid(format!("statement {} has empty text", self.statement_id)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<TweetRecord>,
    pub test: Vec<TweetRecord>,
    pub unlabelled: Vec<TweetRecord>,
}
