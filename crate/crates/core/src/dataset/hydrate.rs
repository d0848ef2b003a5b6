//! Resolving tweet ids to records through a pluggable client.

use std::collections::HashMap;
use std::path::Path;
use std::time::Duration;

use super::ingest::{read_jsonl, LineError};
use super::records::{TweetRecord, UserRecord};
use crate::error::{Error, Result};

pub trait TweetSource: Send + Sync {
    /// `Error::NotFound` when the id does not resolve.
    fn fetch_tweet(&self, tweet_id: &str) -> Result<TweetRecord>;

    fn fetch_user(&self, _user_id: &str) -> Result<Option<UserRecord>> {
        Ok(None)
    }
}

/// In-memory client backed by fixture records.
#[derive(Clone, Debug, Default)]
pub struct FixtureTweetSource {
    tweets: HashMap<String, TweetRecord>,
    users: HashMap<String, UserRecord>,
}

impl FixtureTweetSource {
    pub fn new(tweets: impl IntoIterator<Item = TweetRecord>, users: impl IntoIterator<Item = UserRecord>) -> Self {
        Self {
            tweets: tweets.into_iter().map(|t| (t.tweet_id.clone(), t)).collect(),
            users: users.into_iter().map(|u| (u.user_id.clone(), u)).collect(),
        }
    }

    pub fn from_jsonl(tweets: &Path, users: Option<&Path>) -> Result<Self> {
        let t = read_jsonl::<TweetRecord>(tweets)?.records;
        let u = match users {
            Some(p) => read_jsonl::<UserRecord>(p)?.records,
            None => Vec::new(),
        };
        Ok(Self::new(t, u))
    }

    pub fn insert(&mut self, tweet: TweetRecord) {
        self.tweets.insert(tweet.tweet_id.clone(), tweet);
    }
}

impl TweetSource for FixtureTweetSource {
    fn fetch_tweet(&self, tweet_id: &str) -> Result<TweetRecord> {
        self.tweets.get(tweet_id).cloned().ok_or_else(|| Error::NotFound(format!("tweet {tweet_id}")))
    }

    fn fetch_user(&self, user_id: &str) -> Result<Option<UserRecord>> {
        Ok(self.users.get(user_id).cloned())
    }
}

/// JSON-over-HTTP client: `GET {base}/tweets/{id}` and `GET {base}/users/{id}`
/// answering with records in the JSONL schema.
pub struct HttpTweetSource {
    base: String,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTweetSource {
    pub fn new(base: impl Into<String>, token: Option<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(10))
            .build()
            .map_err(|e| Error::Http(e.to_string()))?;
        Ok(Self { base: base.into().trim_end_matches('/').to_string(), token, client })
    }

    fn get<T: serde::de::DeserializeOwned>(&self, path: &str) -> Result<Option<T>> {
        let mut req = self.client.get(format!("{}/{path}", self.base));
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| Error::Http(e.to_string()))?;
        if resp.status() == reqwest::StatusCode::NOT_FOUND {
            return Ok(None);
        }
        let resp = resp.error_for_status().map_err(|e| Error::Http(e.to_string()))?;
        resp.json().map(Some).map_err(|e| Error::Http(e.to_string()))
    }
}

impl TweetSource for HttpTweetSource {
    fn fetch_tweet(&self, tweet_id: &str) -> Result<TweetRecord> {
        let t: TweetRecord = self
            .get(&format!("tweets/{tweet_id}"))?
            .ok_or_else(|| Error::NotFound(format!("tweet {tweet_id}")))?;
        t.validate()?;
        Ok(t)
    }

    fn fetch_user(&self, user_id: &str) -> Result<Option<UserRecord>> {
        self.get(&format!("users/{user_id}"))
    }
}

/// Resolves every id; failures are reported per id rather than aborting.
pub fn hydrate(ids: &[String], source: &dyn TweetSource) -> (Vec<TweetRecord>, Vec<LineError>) {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (i, id) in ids.iter().enumerate() {
        match source.fetch_tweet(id) {
            Ok(t) => records.push(t),
            Err(e) => errors.push(LineError { line: i + 1, message: format!("{id}: {e}") }),
        }
    }
    (records, errors)
}
