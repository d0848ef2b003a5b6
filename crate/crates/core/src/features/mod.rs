//! Fixed-length tweet (`x_TF`) and user (`x_UF`) feature vectors.
//!
//! Slot order is a compatibility contract for saved models and is pinned by
//! [`FEATURE_SCHEMA_VERSION`]:
//!
//! | slots  | tweet features                                   |
//! |--------|--------------------------------------------------|
//! | 0      | hashtag count                                    |
//! | 1      | favourite count                                  |
//! | 2      | retweet count                                    |
//! | 3      | retweet status (0/1)                             |
//! | 4      | URL count                                        |
//! | 5      | mean domain credibility of the URLs              |
//! | 6      | user-mention count                               |
//! | 7      | media count (photo + video + gif)                |
//! | 8      | sentiment polarity in [-1, 1]                    |
//! | 9-19   | part-of-speech counts, see [`pos::POS_TAGS`]     |
//! | 20-25  | surface-entity counts, see [`pos::ENTITY_KINDS`] |
//!
//! | slot | user features                              |
//! |------|--------------------------------------------|
//! | 0    | verified (0/1)                             |
//! | 1    | follower count                             |
//! | 2    | favourites count                           |
//! | 3    | tweet count                                |
//! | 4    | tweets in the trailing 7 days              |
//! | 5    | description length (characters)            |
//! | 6    | description contains a URL (0/1)           |
//! | 7    | mean seconds between consecutive tweets    |
//!
//! Missing user metadata reads as 0 (unverified, no followers, empty
//! description); an empty history gives 0 tweets/week and 0 gap.

pub mod normalizer;
pub mod pos;
pub mod sentiment;

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};

use crate::dataset::records::{TweetRecord, UserRecord};
use crate::error::{Error, Result};
use crate::text::{scan, TokenKind};

pub use normalizer::Normalizer;
pub use sentiment::sentiment;

pub const FEATURE_SCHEMA_VERSION: &str = "tf26-uf8-v1";
pub const TWEET_FEATURES: usize = 26;
pub const USER_FEATURES: usize = 8;

pub const TWEET_FEATURE_NAMES: [&str; TWEET_FEATURES] = [
    "hashtags", "favourites", "retweets", "is_retweet", "urls", "domain_score", "mentions", "media", "sentiment",
    "pos_noun", "pos_propn", "pos_verb", "pos_adj", "pos_adv", "pos_pron", "pos_det", "pos_adp", "pos_conj",
    "pos_num", "pos_intj", "ent_exclamation", "ent_question", "ent_all_caps", "ent_symbol", "ent_numeral",
    "ent_elongated",
];

pub const USER_FEATURE_NAMES: [&str; USER_FEATURES] = [
    "verified", "followers", "favourites", "tweets", "tweets_per_week", "description_length", "description_url",
    "mean_tweet_gap_s",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TweetFeatureVector(pub Vec<f64>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserFeatureVector(pub Vec<f64>);

/// Domain → credibility score in [0, 1].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainScoreTable {
    pub scores: BTreeMap<String, f64>,
    pub default_score: f64,
}

const BUILTIN_DOMAINS: &str = include_str!("../../config/domain_scores.tsv");

impl Default for DomainScoreTable {
    fn default() -> Self {
        Self::parse_tsv(BUILTIN_DOMAINS, 0.5).expect("built-in domain table is valid")
    }
}

impl DomainScoreTable {
    pub fn new(scores: BTreeMap<String, f64>, default_score: f64) -> Result<Self> {
        for (d, s) in scores.iter().chain(std::iter::once((&"<default>".to_string(), &default_score))) {
            if !(0.0..=1.0).contains(s) {
                return Err(Error::Invalid(format!("domain score for {d} is {s}, outside [0, 1]")));
            }
        }
        Ok(Self { scores, default_score })
    }

    /// `domain<TAB>score` lines; `#` starts a comment.
    pub fn parse_tsv(content: &str, default_score: f64) -> Result<Self> {
        let mut scores = BTreeMap::new();
        for (i, line) in content.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(domain), Some(score)) = (parts.next(), parts.next()) else {
                return Err(Error::Invalid(format!("domain table line {}: expected domain and score", i + 1)));
            };
            let score: f64 = score
                .parse()
                .map_err(|_| Error::Invalid(format!("domain table line {}: bad score {score:?}", i + 1)))?;
            scores.insert(domain.to_ascii_lowercase(), score);
        }
        Self::new(scores, default_score)
    }

    pub fn load(path: &Path, default_score: f64) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_tsv(&content, default_score)
    }

    /// Score of the URL's host, falling back through parent domains, then the default.
    pub fn score_url(&self, raw: &str) -> f64 {
        let parsed = url::Url::parse(raw).or_else(|_| url::Url::parse(&format!("http://{raw}")));
        let Some(host) = parsed.ok().and_then(|u| u.host_str().map(str::to_ascii_lowercase)) else {
            return self.default_score;
        };
        let mut host = host.trim_start_matches("www.");
        loop {
            if let Some(&s) = self.scores.get(host) {
                return s;
            }
            match host.split_once('.') {
                Some((_, rest)) if rest.contains('.') => host = rest,
                _ => return self.default_score,
            }
        }
    }
}

fn tweet_urls(tweet: &TweetRecord) -> Vec<String> {
    if !tweet.urls.is_empty() {
        return tweet.urls.clone();
    }
    scan(&tweet.text).into_iter().filter(|t| t.kind == TokenKind::Url).map(|t| t.text).collect()
}

fn hashtag_count(tweet: &TweetRecord) -> usize {
    if !tweet.hashtags.is_empty() {
        return tweet.hashtags.len();
    }
    scan(&tweet.text).iter().filter(|t| t.kind == TokenKind::Hashtag).count()
}

pub fn extract_tweet_features(tweet: &TweetRecord, table: &DomainScoreTable) -> TweetFeatureVector {
    let urls = tweet_urls(tweet);
    let domain_score = if urls.is_empty() {
        table.default_score
    } else {
        urls.iter().map(|u| table.score_url(u)).sum::<f64>() / urls.len() as f64
    };
    let mentions = scan(&tweet.text).iter().filter(|t| t.kind == TokenKind::Mention).count();

    let mut v = Vec::with_capacity(TWEET_FEATURES);
    v.push(hashtag_count(tweet) as f64);
    v.push(tweet.favourite_count as f64);
    v.push(tweet.retweet_count as f64);
    v.push(if tweet.is_retweet { 1.0 } else { 0.0 });
    v.push(urls.len() as f64);
    v.push(domain_score);
    v.push(mentions as f64);
    v.push(tweet.media.total() as f64);
    v.push(sentiment(&tweet.text));
    v.extend(pos::pos_counts(&tweet.text));
    v.extend(pos::entity_counts(&tweet.text));
    debug_assert_eq!(v.len(), TWEET_FEATURES);
    TweetFeatureVector(v)
}

/// User features with the trailing week ending at the latest timestamp.
pub fn extract_user_features(user: &UserRecord, recent_tweets: &[DateTime<Utc>]) -> UserFeatureVector {
    let reference = recent_tweets.last().copied();
    extract_user_features_at(user, recent_tweets, reference)
}

/// `recent_tweets` must be sorted ascending.
pub fn extract_user_features_at(user: &UserRecord, recent_tweets: &[DateTime<Utc>], reference: Option<DateTime<Utc>>) -> UserFeatureVector {
    debug_assert!(recent_tweets.windows(2).all(|w| w[0] <= w[1]), "timestamps must be sorted");
    let per_week = match reference {
        Some(r) => {
            let start = r - Duration::days(7);
            recent_tweets.iter().filter(|&&t| t > start && t <= r).count() as f64
        }
        None => 0.0,
    };
    let mean_gap = if recent_tweets.len() < 2 {
        0.0
    } else {
        let total: i64 = recent_tweets.windows(2).map(|w| (w[1] - w[0]).num_seconds().max(0)).sum();
        total as f64 / (recent_tweets.len() - 1) as f64
    };
    let description = user.description.as_deref().unwrap_or("");
    let has_url = scan(description).iter().any(|t| t.kind == TokenKind::Url);
    UserFeatureVector(vec![
        if user.verified { 1.0 } else { 0.0 },
        user.followers_count.unwrap_or(0) as f64,
        user.favourites_count.unwrap_or(0) as f64,
        user.statuses_count.unwrap_or(0) as f64,
        per_week,
        description.chars().count() as f64,
        if has_url { 1.0 } else { 0.0 },
        mean_gap,
    ])
}
