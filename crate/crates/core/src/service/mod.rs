//! Classification service with human feedback and confidence-gated online
//! learning.
//!
//! Readers classify against an immutable published snapshot. Feedback that
//! passes the gate is queued for a single updater thread, which applies one
//! reduced-rate Adam step, checks a fixed sanity batch, and publishes the new
//! weights atomically under a bumped `model_version`.

pub mod http;

use std::collections::{HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::dataset::{Label, TweetRecord, TweetSource, UserRecord};
use crate::error::{Error, Result};
use crate::network::{Batch, Checkpoint, Example, Network};
use crate::params::{clip_global_norm, Adam};
use crate::pipeline::{Pipeline, Resources};
use crate::training::{loss_ml, TrainingConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    /// Feedback only trains when the served confidence is below this.
    pub confidence_gate: f64,
    /// Online learning rate as a fraction of the training rate.
    pub online_lr_factor: f64,
    /// Largest accepted relative rise of the sanity-batch loss.
    pub sanity_tolerance: f64,
    pub training: TrainingConfig,
    /// Append-only JSONL feedback log.
    pub feedback_log: Option<PathBuf>,
    /// Where each accepted update is published.
    pub checkpoint_out: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            confidence_gate: 0.6,
            online_lr_factor: 0.1,
            sanity_tolerance: 0.10,
            training: TrainingConfig::default(),
            feedback_log: None,
            checkpoint_out: None,
        }
    }
}

/// Either an id resolved through the tweet client, or an inline tweet.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ClassifyRequest {
    #[serde(default)]
    pub tweet_id: Option<String>,
    #[serde(default, alias = "payload")]
    pub tweet: Option<TweetRecord>,
    #[serde(default)]
    pub user: Option<UserRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyResponse {
    pub tweet_id: String,
    pub label: Label,
    pub confidence: f64,
    pub probabilities: [f64; 2],
    pub model_version: u64,
    pub latency_ms: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FeedbackRequest {
    pub tweet_id: String,
    pub user_label: Label,
    /// Who sent the feedback; dedup is per (tweet, user).
    #[serde(default = "anonymous")]
    pub user_id: String,
}

fn anonymous() -> String {
    "anonymous".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub tweet_id: String,
    pub user_id: String,
    pub served_label: Label,
    pub served_confidence: f64,
    pub served_version: u64,
    pub user_label: Label,
    pub timestamp: DateTime<Utc>,
    /// The feedback passed the gate and an online update was queued.
    pub applied_update: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_version: u64,
    pub queue_depth: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum UpdateOutcome {
    Published { version: u64 },
    SanityRejected { before: f64, after: f64 },
    NonFinite,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UpdateEvent {
    pub tweet_id: String,
    pub outcome: UpdateOutcome,
}

struct Published {
    version: u64,
    network: Network<f64>,
}

struct Served {
    label: Label,
    confidence: f64,
    version: u64,
    example: Example,
}

struct Job {
    tweet_id: String,
    example: Example,
}

struct Inner {
    pipeline: Pipeline,
    tweets: Arc<dyn TweetSource>,
    config: ServiceConfig,
    published: RwLock<Arc<Published>>,
    served: Mutex<HashMap<String, Served>>,
    gated_pairs: Mutex<HashSet<(String, String)>>,
    feedback: Mutex<Vec<FeedbackRecord>>,
    log: Mutex<Option<File>>,
    events: Mutex<Vec<UpdateEvent>>,
    queue_depth: AtomicUsize,
}

pub struct Service {
    inner: Arc<Inner>,
    sender: Mutex<Option<Sender<Job>>>,
    worker: Mutex<Option<JoinHandle<()>>>,
}

impl Service {
    /// `sanity` is the fixed labelled batch guarding online updates; an empty
    /// one disables the guard.
    pub fn new(checkpoint: Checkpoint, resources: Resources, tweets: Arc<dyn TweetSource>, sanity: Vec<Example>, config: ServiceConfig) -> Result<Self> {
        let network = checkpoint.network()?;
        if network.config.ek_dim != resources.embedder.dim() {
            return Err(Error::Shape {
                layer: "external knowledge".into(),
                expected: network.config.ek_dim.to_string(),
                got: resources.embedder.dim().to_string(),
            });
        }
        if sanity.iter().any(|e| e.label.is_none()) {
            return Err(Error::Invalid("sanity examples must be labelled".into()));
        }
        let log = match &config.feedback_log {
            Some(p) => Some(OpenOptions::new().create(true).append(true).open(p).map_err(|e| Error::io(p, e))?),
            None => None,
        };
        let adam = Adam::new(
            &network.store,
            config.training.learning_rate * config.online_lr_factor,
            config.training.beta1,
            config.training.beta2,
        );
        let inner = Arc::new(Inner {
            pipeline: Pipeline::from_checkpoint(&checkpoint, resources),
            tweets,
            config,
            published: RwLock::new(Arc::new(Published { version: 0, network })),
            served: Mutex::new(HashMap::new()),
            gated_pairs: Mutex::new(HashSet::new()),
            feedback: Mutex::new(Vec::new()),
            log: Mutex::new(log),
            events: Mutex::new(Vec::new()),
            queue_depth: AtomicUsize::new(0),
        });
        let (tx, rx) = channel();
        let worker_inner = Arc::clone(&inner);
        let worker = std::thread::Builder::new()
            .name("online-updater".into())
            .spawn(move || updater(worker_inner, rx, adam, sanity))
            .map_err(|e| Error::Invalid(format!("cannot start updater: {e}")))?;
        Ok(Self { inner, sender: Mutex::new(Some(tx)), worker: Mutex::new(Some(worker)) })
    }

    pub fn model_version(&self) -> u64 {
        self.inner.snapshot().version
    }

    pub fn health(&self) -> Health {
        Health { status: "ok".into(), model_version: self.model_version(), queue_depth: self.inner.queue_depth.load(Ordering::SeqCst) }
    }

    pub fn classify(&self, request: &ClassifyRequest) -> Result<ClassifyResponse> {
        let start = Instant::now();
        let (tweet, user) = self.resolve(request)?;
        let example = self.inner.pipeline.example(&tweet, user.as_ref(), &[tweet.created_at])?;
        let snapshot = self.inner.snapshot();
        let prediction = snapshot.network.predict(&Batch::new(&[&example])?)?.remove(0);
        self.inner.served.lock().expect("served lock").insert(
            tweet.tweet_id.clone(),
            Served { label: prediction.label, confidence: prediction.confidence, version: snapshot.version, example },
        );
        Ok(ClassifyResponse {
            tweet_id: tweet.tweet_id,
            label: prediction.label,
            confidence: prediction.confidence,
            probabilities: prediction.probabilities,
            model_version: snapshot.version,
            latency_ms: start.elapsed().as_secs_f64() * 1e3,
        })
    }

    fn resolve(&self, request: &ClassifyRequest) -> Result<(TweetRecord, Option<UserRecord>)> {
        let tweet = match (&request.tweet, &request.tweet_id) {
            (Some(t), _) => t.clone(),
            (None, Some(id)) if !id.trim().is_empty() => self.inner.tweets.fetch_tweet(id)?,
            _ => return Err(Error::Invalid("request needs a tweet_id or an inline tweet".into())),
        };
        tweet.validate()?;
        let user = match &request.user {
            Some(u) => Some(u.clone()),
            None => self.inner.tweets.fetch_user(&tweet.user_id).unwrap_or_else(|e| {
                log::warn!("user {} unavailable: {e}", tweet.user_id);
                None
            }),
        };
        Ok((tweet, user))
    }

    /// Records feedback; queues exactly one update for the first
    /// disagreeing, low-confidence feedback of each (tweet, user) pair.
    pub fn submit_feedback(&self, request: &FeedbackRequest) -> Result<FeedbackRecord> {
        let inner = &self.inner;
        let (served_label, served_confidence, served_version, mut example) = {
            let served = inner.served.lock().expect("served lock");
            let s = served.get(&request.tweet_id).ok_or_else(|| Error::NotFound(format!("tweet {} was never classified", request.tweet_id)))?;
            (s.label, s.confidence, s.version, s.example.clone())
        };
        let gated = request.user_label != served_label && served_confidence < inner.config.confidence_gate;
        let applied_update = gated && inner.gated_pairs.lock().expect("dedup lock").insert((request.tweet_id.clone(), request.user_id.clone()));
        let record = FeedbackRecord {
            tweet_id: request.tweet_id.clone(),
            user_id: request.user_id.clone(),
            served_label,
            served_confidence,
            served_version,
            user_label: request.user_label,
            timestamp: Utc::now(),
            applied_update,
        };
        if let Some(f) = inner.log.lock().expect("log lock").as_mut() {
            let line = serde_json::to_string(&record)?;
            writeln!(f, "{line}").and_then(|_| f.flush()).map_err(|e| Error::io(inner.config.feedback_log.clone().unwrap_or_default(), e))?;
        }
        inner.feedback.lock().expect("feedback lock").push(record.clone());
        if applied_update {
            example.label = Some(request.user_label);
            inner.queue_depth.fetch_add(1, Ordering::SeqCst);
            let sent = self.sender.lock().expect("sender lock").as_ref().map(|tx| tx.send(Job { tweet_id: request.tweet_id.clone(), example }));
            if !matches!(sent, Some(Ok(()))) {
                inner.queue_depth.fetch_sub(1, Ordering::SeqCst);
                return Err(Error::Invalid("online updater has stopped".into()));
            }
        }
        Ok(record)
    }

    pub fn feedback_log(&self) -> Vec<FeedbackRecord> {
        self.inner.feedback.lock().expect("feedback lock").clone()
    }

    pub fn update_events(&self) -> Vec<UpdateEvent> {
        self.inner.events.lock().expect("events lock").clone()
    }

    /// Blocks until the update queue is drained or `timeout` passes; returns
    /// whether it drained.
    pub fn wait_idle(&self, timeout: Duration) -> bool {
        let deadline = Instant::now() + timeout;
        while self.inner.queue_depth.load(Ordering::SeqCst) > 0 {
            if Instant::now() > deadline {
                return false;
            }
            std::thread::sleep(Duration::from_millis(2));
        }
        true
    }

    /// The currently published weights.
    pub fn network(&self) -> Network<f64> {
        self.inner.snapshot().network.clone()
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        if let Ok(mut s) = self.sender.lock() {
            s.take();
        }
        if let Some(h) = self.worker.lock().ok().and_then(|mut w| w.take()) {
            let _ = h.join();
        }
    }
}

impl Inner {
    fn snapshot(&self) -> Arc<Published> {
        Arc::clone(&self.published.read().expect("published lock"))
    }

    fn sanity_loss(network: &Network<f64>, sanity: Option<&Batch<f64>>) -> Result<Option<f64>> {
        sanity.map(|b| loss_ml(network, &network.store, b, None).map(|o| o.value)).transpose()
    }

    fn apply(&self, job: &Job, adam: &mut Adam<f64>, sanity: Option<&Batch<f64>>) -> Result<UpdateOutcome> {
        let current = self.snapshot();
        let mut network = current.network.clone();
        let before = Self::sanity_loss(&network, sanity)?;
        let batch = Batch::new(&[&job.example])?;
        let out = loss_ml(&network, &network.store, &batch, None)?;
        if !out.value.is_finite() {
            return Ok(UpdateOutcome::NonFinite);
        }
        let mut grads = out.grads;
        clip_global_norm(&mut grads, self.config.training.clip_norm);
        if network.config.freeze_embeddings {
            grads[network.modules.embedding.0].fill(0.0);
        }
        let saved = adam.clone();
        adam.step(&mut network.store, &grads);
        if network.store.iter().any(|(_, p)| p.value.iter().any(|x| !x.is_finite())) {
            *adam = saved;
            return Ok(UpdateOutcome::NonFinite);
        }
        if let (Some(before), Some(after)) = (before, Self::sanity_loss(&network, sanity)?) {
            if !after.is_finite() {
                *adam = saved;
                return Ok(UpdateOutcome::NonFinite);
            }
            if after > before * (1.0 + self.config.sanity_tolerance) {
                *adam = saved;
                return Ok(UpdateOutcome::SanityRejected { before, after });
            }
        }
        let version = current.version + 1;
        if let Some(path) = &self.config.checkpoint_out {
            let p = &self.pipeline;
            Checkpoint::new(&network, p.vocab.clone(), p.tweet_normalizer.clone(), p.user_normalizer.clone()).save(path)?;
        }
        *self.published.write().expect("published lock") = Arc::new(Published { version, network });
        Ok(UpdateOutcome::Published { version })
    }
}

fn updater(inner: Arc<Inner>, jobs: Receiver<Job>, mut adam: Adam<f64>, sanity: Vec<Example>) {
    let refs: Vec<&Example> = sanity.iter().collect();
    let sanity = if refs.is_empty() { None } else { Batch::new(&refs).ok() };
    for job in jobs {
        let outcome = inner.apply(&job, &mut adam, sanity.as_ref()).unwrap_or_else(|e| UpdateOutcome::Failed(e.to_string()));
        match &outcome {
            UpdateOutcome::Published { version } => log::info!("online update from tweet {} published as version {version}", job.tweet_id),
            other => log::warn!("online update from tweet {} skipped: {other:?}", job.tweet_id),
        }
        inner.events.lock().expect("events lock").push(UpdateEvent { tweet_id: job.tweet_id, outcome });
        inner.queue_depth.fetch_sub(1, Ordering::SeqCst);
    }
}
