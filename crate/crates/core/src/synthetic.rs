//! Generated two-topic text classification data for desk-scale experiments.
//!
//! Each class owns a band of topic words; documents mix topic words of their
//! class with words drawn from a shared background band. Tweet, user and
//! external-knowledge vectors are pure noise, so only the text carries signal.

use std::collections::HashMap;
use std::sync::Arc;

use chrono::{TimeZone, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{Label, LabelSource, TweetRecord};
use crate::encoder::UNK;
use crate::error::{Error, Result};
use crate::embedding::HashingEmbedder;
use crate::features::{TWEET_FEATURES, USER_FEATURES};
use crate::network::{Batch, Checkpoint, Example, FeatureLayout, Network, NetworkConfig};
use crate::pipeline::{Pipeline, Resources};
use crate::training::{train, TrainingConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub labelled: usize,
    pub unlabelled: usize,
    pub test: usize,
    /// Including the padding and unknown ids.
    pub vocab_size: usize,
    /// Topic words per class.
    pub topic_words: usize,
    /// Probability that a token comes from the document's topic band.
    pub topic_rate: f64,
    pub min_len: usize,
    pub max_len: usize,
    pub tweet_features: usize,
    pub user_features: usize,
    pub ek_dim: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            labelled: 200,
            unlabelled: 2000,
            test: 400,
            vocab_size: 500,
            topic_words: 100,
            topic_rate: 0.2,
            min_len: 6,
            max_len: 14,
            tweet_features: crate::features::TWEET_FEATURES,
            user_features: crate::features::USER_FEATURES,
            ek_dim: 16,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub train: Vec<Example>,
    pub unlabelled: Vec<Example>,
    pub test: Vec<Example>,
}

fn noise<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size < 2 + 2 * self.topic_words + 1 || self.topic_words == 0 {
            return Err(Error::Invalid(format!("vocabulary {} too small for two bands of {} topic words", self.vocab_size, self.topic_words)));
        }
        if self.min_len == 0 || self.min_len > self.max_len || !(0.0..=1.0).contains(&self.topic_rate) {
            return Err(Error::Invalid("need 1 ≤ min_len ≤ max_len and topic_rate in [0, 1]".into()));
        }
        Ok(())
    }

    fn tokens<R: Rng + ?Sized>(&self, label: Label, rng: &mut R) -> Vec<usize> {
        let band = 2 + label.index() * self.topic_words;
        let shared = 2 + 2 * self.topic_words;
        let len = rng.random_range(self.min_len..=self.max_len);
        (0..len)
            .map(|_| {
                if rng.random::<f64>() < self.topic_rate {
                    band + rng.random_range(0..self.topic_words)
                } else {
                    rng.random_range(shared..self.vocab_size)
                }
            })
            .collect()
    }

    fn example<R: Rng + ?Sized>(&self, id: String, labelled: bool, rng: &mut R) -> Example {
        let label = if rng.random::<bool>() { Label::Fake } else { Label::Genuine };
        Example {
            tweet_id: id,
            ids: self.tokens(label, rng),
            tweet: noise(self.tweet_features, rng),
            user: noise(self.user_features, rng),
            ek: noise(self.ek_dim, rng),
            label: labelled.then_some(label),
        }
    }

    pub fn generate(&self) -> Result<SyntheticData> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut part = |prefix: &str, n: usize, labelled: bool| -> Vec<Example> {
            (0..n).map(|i| self.example(format!("{prefix}{i}"), labelled, &mut rng)).collect()
        };
        let train = part("train-", self.labelled, true);
        let unlabelled = part("unl-", self.unlabelled, false);
        let test = part("test-", self.test, true);
        Ok(SyntheticData { train, unlabelled, test })
    }

    /// The same generator rendered as tweet records whose text spells the
    /// token ids (`w17 w203 ...`), for exercising the file-based pipeline.
    /// Training and test records are marked human-labelled.
    pub fn records(&self) -> Result<Vec<TweetRecord>> {
        let data = self.generate()?;
        let start = Utc.with_ymd_and_hms(2020, 3, 1, 0, 0, 0).single().expect("valid date");
        let to_record = |(i, e): (usize, &Example)| {
            let text = e.ids.iter().map(|&t| if t == UNK { "unk".to_string() } else { format!("w{t}") }).collect::<Vec<_>>().join(" ");
            let rec = TweetRecord::new(e.tweet_id.clone(), text, format!("user{}", i % 97), start + chrono::Duration::minutes(i as i64));
            match e.label {
                Some(l) => rec.with_label(l, LabelSource::Human),
                None => rec,
            }
        };
        Ok(data.train.iter().chain(&data.test).chain(&data.unlabelled).enumerate().map(to_record).collect())
    }
}

/// Compact best-row architecture sized for the generated data.
pub fn desk_network(data: &SyntheticConfig) -> NetworkConfig {
    NetworkConfig {
        vocab_size: data.vocab_size,
        embed_dim: 16,
        hidden: 16,
        tweet_features: data.tweet_features,
        user_features: data.user_features,
        ek_dim: data.ek_dim,
        ek_width: 8,
        layout: FeatureLayout::Split { tweet: vec![16, 32], user: vec![16, 32, 32], cross_stitch: true, early_text_fusion: true },
        attention: true,
        head_width: 32,
        dropout: 0.3,
        freeze_embeddings: false,
    }
}

/// Training schedule for [`desk_network`]. Perturbation radii are scaled
/// down to the norm of 16-dimensional embeddings initialized at std 0.1
/// (about 0.4 per token), where the 300-dimensional defaults would swamp the input.
pub fn desk_training() -> TrainingConfig {
    TrainingConfig { learning_rate: 0.005, max_steps: 400, batch_size: 32, eval_every: 10, epsilon_at: 0.03, epsilon_vat: 0.02, ..Default::default() }
}

/// Labelled tweets, a checkpoint briefly trained on them and the matching
/// offline resources; enough to stand up a [`crate::service::Service`].
pub struct ToyModel {
    pub tweets: Vec<TweetRecord>,
    pub checkpoint: Checkpoint,
    pub resources: Resources,
}

pub fn toy_model(cfg: &SyntheticConfig, steps: usize) -> Result<ToyModel> {
    let tweets: Vec<TweetRecord> = cfg.records()?.into_iter().filter(TweetRecord::is_labelled).collect();
    let resources = Resources::offline(Arc::new(HashingEmbedder::new(cfg.ek_dim)));
    let pipeline = Pipeline::fit(&tweets, &HashMap::new(), cfg.vocab_size, resources.clone())?;
    let examples = pipeline.examples(&tweets, &HashMap::new())?;
    let mut net_cfg = desk_network(cfg);
    net_cfg.vocab_size = pipeline.vocab.len();
    net_cfg.tweet_features = TWEET_FEATURES;
    net_cfg.user_features = USER_FEATURES;
    let training = TrainingConfig { lambda_at: 0.0, lambda_vat: 0.0, max_steps: steps, seed: cfg.seed, ..desk_training() };
    let net = train(Network::new(net_cfg, cfg.seed)?, &examples, &[], &training)?.network;
    let checkpoint = Checkpoint::new(&net, pipeline.vocab, pipeline.tweet_normalizer, pipeline.user_normalizer);
    Ok(ToyModel { tweets, checkpoint, resources })
}

/// Shifts the output bias so that `example` is predicted as `label` with
/// exactly `confidence` (up to rounding).
pub fn pin_confidence(net: &mut Network<f64>, example: &Example, label: Label, confidence: f64) -> Result<()> {
    if !(0.5..1.0).contains(&confidence) {
        return Err(Error::Invalid(format!("confidence {confidence} outside [0.5, 1)")));
    }
    let p = net.probabilities(&Batch::new(&[example])?)?;
    let margin = (p[[0, 0]] / p[[0, 1]]).ln();
    let logit = (confidence / (1.0 - confidence)).ln();
    let target = if label == Label::Fake { logit } else { -logit };
    if !margin.is_finite() {
        return Err(Error::Invalid("saturated prediction".into()));
    }
    let b = net.modules.head_out.b;
    net.store.get_mut(b)[[0, 0]] += target - margin;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_and_bands() {
        let cfg = SyntheticConfig { labelled: 50, unlabelled: 80, test: 30, ..Default::default() };
        let d = cfg.generate().unwrap();
        assert_eq!((d.train.len(), d.unlabelled.len(), d.test.len()), (50, 80, 30));
        assert!(d.unlabelled.iter().all(|e| e.label.is_none()));
        for e in d.train.iter().chain(&d.test) {
            let other = 2 + (1 - e.label.unwrap().index()) * cfg.topic_words;
            assert!(e.ids.iter().all(|&t| t >= 2 && t < cfg.vocab_size));
            assert!(e.ids.iter().all(|&t| !(other..other + cfg.topic_words).contains(&t)));
            assert!(e.ids.len() >= cfg.min_len && e.ids.len() <= cfg.max_len);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = SyntheticConfig { labelled: 20, unlabelled: 20, test: 20, ..Default::default() };
        let a = cfg.generate().unwrap();
        let b = cfg.generate().unwrap();
        assert_eq!(a.train, b.train);
        assert_eq!(a.test, b.test);
    }

    #[test]
    fn records_render_tokens() {
        let cfg = SyntheticConfig { labelled: 4, unlabelled: 3, test: 2, ..Default::default() };
        let recs = cfg.records().unwrap();
        assert_eq!(recs.len(), 9);
        assert_eq!(recs.iter().filter(|r| r.is_labelled()).count(), 6);
        assert!(recs[0].text.starts_with('w'));
    }

    #[test]
    fn rejects_small_vocabulary() {
        let cfg = SyntheticConfig { vocab_size: 100, topic_words: 60, ..Default::default() };
        assert!(cfg.generate().is_err());
    }
}
