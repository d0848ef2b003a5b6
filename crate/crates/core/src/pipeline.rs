//! Raw tweet → model-ready [`Example`]: token ids, normalized tweet and user
//! features, and the pooled external-knowledge vector.

use std::collections::HashMap;
use std::sync::Arc;

use chrono::{DateTime, Utc};

use crate::dataset::{TweetRecord, UserRecord};
use crate::embedding::SentenceEmbedder;
use crate::encoder::Vocabulary;
use crate::error::Result;
use crate::features::{extract_tweet_features, extract_user_features, DomainScoreTable, Normalizer};
use crate::knowledge::{retrieve_cached, EkCache, RetrievalConfig, SearchClient};
use crate::network::{Checkpoint, Example};

/// Retrieval and scoring resources that are not part of a checkpoint.
#[derive(Clone)]
pub struct Resources {
    pub domains: DomainScoreTable,
    pub embedder: Arc<dyn SentenceEmbedder>,
    /// Without a search client, tweets missing from the cache get a zero
    /// knowledge vector.
    pub search: Option<Arc<dyn SearchClient>>,
    pub cache: Arc<EkCache>,
    pub retrieval: RetrievalConfig,
}

impl Resources {
    pub fn offline(embedder: Arc<dyn SentenceEmbedder>) -> Self {
        Self {
            domains: DomainScoreTable::default(),
            embedder,
            search: None,
            cache: Arc::new(EkCache::in_memory()),
            retrieval: RetrievalConfig::default(),
        }
    }
}

#[derive(Clone)]
pub struct Pipeline {
    pub vocab: Vocabulary,
    pub tweet_normalizer: Normalizer,
    pub user_normalizer: Normalizer,
    pub resources: Resources,
}

fn placeholder_user(id: &str) -> UserRecord {
    UserRecord { user_id: id.to_string(), verified: false, followers_count: None, favourites_count: None, statuses_count: None, description: None }
}

/// Posting times per user across `tweets`.
pub fn user_histories(tweets: &[TweetRecord]) -> HashMap<String, Vec<DateTime<Utc>>> {
    let mut out: HashMap<String, Vec<DateTime<Utc>>> = HashMap::new();
    for t in tweets {
        out.entry(t.user_id.clone()).or_default().push(t.created_at);
    }
    out.values_mut().for_each(|v| v.sort());
    out
}

fn raw_features(
    domains: &DomainScoreTable,
    tweet: &TweetRecord,
    user: Option<&UserRecord>,
    history: &[DateTime<Utc>],
) -> (Vec<f64>, Vec<f64>) {
    let tf = extract_tweet_features(tweet, domains).0;
    let placeholder;
    let user = match user {
        Some(u) => u,
        None => {
            placeholder = placeholder_user(&tweet.user_id);
            &placeholder
        }
    };
    let own: Vec<DateTime<Utc>> = if history.is_empty() { vec![tweet.created_at] } else { history.to_vec() };
    let uf = extract_user_features(user, &own).0;
    (tf, uf)
}

impl Pipeline {
    /// Builds the vocabulary and fits both normalizers on `train`.
    pub fn fit(train: &[TweetRecord], users: &HashMap<String, UserRecord>, vocab_size: usize, resources: Resources) -> Result<Self> {
        let vocab = Vocabulary::build(train.iter().map(|t| t.text.as_str()), vocab_size)?;
        let histories = user_histories(train);
        let (tf, uf): (Vec<_>, Vec<_>) = train
            .iter()
            .map(|t| raw_features(&resources.domains, t, users.get(&t.user_id), histories.get(&t.user_id).map_or(&[][..], |v| v)))
            .unzip();
        Ok(Self { vocab, tweet_normalizer: Normalizer::fit(&tf)?, user_normalizer: Normalizer::fit(&uf)?, resources })
    }

    pub fn from_checkpoint(ck: &Checkpoint, resources: Resources) -> Self {
        Self { vocab: ck.vocab.clone(), tweet_normalizer: ck.tweet_normalizer.clone(), user_normalizer: ck.user_normalizer.clone(), resources }
    }

    pub fn ek_dim(&self) -> usize {
        self.resources.embedder.dim()
    }

    /// Cache first, then live retrieval when a search client is configured.
    pub fn external_knowledge(&self, tweet: &TweetRecord) -> Result<Vec<f64>> {
        let r = &self.resources;
        if let Some(ek) = r.cache.get(&tweet.tweet_id) {
            return Ok(ek.embedding);
        }
        match &r.search {
            Some(client) => Ok(retrieve_cached(&r.cache, &tweet.tweet_id, &tweet.text, client.as_ref(), r.embedder.as_ref(), &r.retrieval)?.embedding),
            None => Ok(vec![0.0; self.ek_dim()]),
        }
    }

    pub fn example(&self, tweet: &TweetRecord, user: Option<&UserRecord>, history: &[DateTime<Utc>]) -> Result<Example> {
        tweet.validate()?;
        let (tf, uf) = raw_features(&self.resources.domains, tweet, user, history);
        Ok(Example {
            tweet_id: tweet.tweet_id.clone(),
            ids: self.vocab.encode(&tweet.text),
            tweet: self.tweet_normalizer.apply(&tf)?,
            user: self.user_normalizer.apply(&uf)?,
            ek: self.external_knowledge(tweet)?,
            label: tweet.label,
        })
    }

    /// Examples for a set of tweets; user histories come from the set itself.
    pub fn examples(&self, tweets: &[TweetRecord], users: &HashMap<String, UserRecord>) -> Result<Vec<Example>> {
        let histories = user_histories(tweets);
        tweets.iter().map(|t| self.example(t, users.get(&t.user_id), histories.get(&t.user_id).map_or(&[][..], |v| v))).collect()
    }
}
