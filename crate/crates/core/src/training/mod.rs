//! Mixed-objective training: supervised, adversarial and virtual-adversarial
//! terms over labelled and unlabelled batches, with Adam, global-norm
//! clipping, plateau learning-rate decay and early stopping on validation
//! macro F1.

pub mod losses;

use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::evaluation::Metrics;
use crate::network::{Batch, Example, Network};
use crate::params::{clip_global_norm, global_norm, Adam};

pub use losses::{adv_perturbation, clean_distribution, example_norms, loss_at, loss_ml, loss_vat, vat_perturbation, Perturbation, TermOutput, VatPerturbation};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub lambda_ml: f64,
    pub lambda_at: f64,
    pub lambda_vat: f64,
    pub epsilon_at: f64,
    pub epsilon_vat: f64,
    pub xi: f64,
    pub power_iterations: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub decay_factor: f64,
    pub clip_norm: f64,
    /// Evaluations without a validation gain before stopping.
    pub patience: usize,
    /// Evaluations without a validation gain before the learning rate decays.
    pub plateau: usize,
    pub batch_size: usize,
    /// Unlabelled examples drawn per labelled example for the VAT batch.
    pub unlabelled_ratio: f64,
    pub max_steps: usize,
    pub eval_every: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            lambda_ml: 1.0,
            lambda_at: 1.0,
            lambda_vat: 1.0,
            epsilon_at: 2.0,
            epsilon_vat: 1.0,
            xi: 1e-6,
            power_iterations: 1,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.98,
            decay_factor: 0.5,
            clip_norm: 1.0,
            patience: 20,
            plateau: 5,
            batch_size: 32,
            unlabelled_ratio: 1.0,
            max_steps: 2000,
            eval_every: 20,
            validation_fraction: 0.1,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    /// The five objective combinations compared in the loss ablation.
    pub fn objective_rows(&self) -> Vec<(String, TrainingConfig)> {
        let with = |ml: f64, at: f64, vat: f64| TrainingConfig { lambda_ml: ml, lambda_at: at, lambda_vat: vat, ..self.clone() };
        vec![
            ("ML".into(), with(1.0, 0.0, 0.0)),
            ("ML+AT".into(), with(1.0, 1.0, 0.0)),
            ("AT+VAT".into(), with(0.0, 1.0, 1.0)),
            ("ML+VAT".into(), with(1.0, 0.0, 1.0)),
            ("ML+AT+VAT".into(), with(1.0, 1.0, 1.0)),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epsilon_at", self.epsilon_at),
            ("epsilon_vat", self.epsilon_vat),
            ("xi", self.xi),
            ("learning_rate", self.learning_rate),
            ("clip_norm", self.clip_norm),
            ("decay_factor", self.decay_factor),
        ];
        if let Some((name, v)) = positive.iter().find(|(_, v)| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Invalid(format!("{name} must be positive, got {v}")));
        }
        if [self.lambda_ml, self.lambda_at, self.lambda_vat].iter().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(Error::Invalid("loss weights must be non-negative".into()));
        }
        if self.lambda_ml + self.lambda_at + self.lambda_vat == 0.0 {
            return Err(Error::Invalid("at least one loss weight must be positive".into()));
        }
        if self.batch_size == 0 || self.eval_every == 0 || self.power_iterations == 0 {
            return Err(Error::Invalid("batch_size, eval_every and power_iterations must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) || !(self.unlabelled_ratio >= 0.0) {
            return Err(Error::Invalid("validation_fraction must be in [0, 1) and unlabelled_ratio ≥ 0".into()));
        }
        if !(self.beta1 >= 0.0 && self.beta1 < 1.0 && self.beta2 >= 0.0 && self.beta2 < 1.0) {
            return Err(Error::Invalid("Adam betas must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_ml: f64,
    pub l_at: f64,
    pub l_vat: f64,
    pub l_mix: f64,
}

/// One logged optimizer step. Validation columns are filled on evaluation steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub step: usize,
    pub l_ml: f64,
    pub l_at: f64,
    pub l_vat: f64,
    pub l_mix: f64,
    pub grad_norm: f64,
    pub clipped_norm: f64,
    pub learning_rate: f64,
    pub val_accuracy: Option<f64>,
    pub val_f1: Option<f64>,
}

pub fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Loss values and the λ-weighted parameter gradient of one step.
pub struct StepResult {
    pub losses: LossBreakdown,
    pub grads: Vec<Array2<f64>>,
}

fn finite(term: &'static str, value: f64, step: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFinite { term, step })
    }
}

/// Evaluates the mixed objective on one labelled batch and one VAT batch
/// (labelled plus unlabelled examples). Terms with a zero weight are not
/// computed and log as 0, except that the supervised pass also runs when
/// only the adversarial term needs its input gradient.
pub fn mixed_objective<R: Rng + ?Sized>(
    net: &Network<f64>,
    labelled: &Batch<f64>,
    vat_batch: &Batch<f64>,
    cfg: &TrainingConfig,
    step: usize,
    rng: &mut R,
) -> Result<StepResult> {
    let store = &net.store;
    let mut grads = store.zeros_like();
    let mut acc = |g: &[Array2<f64>], w: f64| {
        for (a, b) in grads.iter_mut().zip(g) {
            a.scaled_add(w, b);
        }
    };
    let mut losses = LossBreakdown::default();
    let mask = net.dropout_mask(labelled.len(), rng);

    if cfg.lambda_ml > 0.0 || cfg.lambda_at > 0.0 {
        let ml = loss_ml(net, store, labelled, mask.as_ref())?;
        losses.l_ml = finite("ml", ml.value, step)?;
        if cfg.lambda_ml > 0.0 {
            acc(&ml.grads, cfg.lambda_ml);
        }
        if cfg.lambda_at > 0.0 {
            let r = adv_perturbation(&ml.input_grads, cfg.epsilon_at);
            let at = loss_at(net, store, labelled, &r, mask.as_ref())?;
            losses.l_at = finite("at", at.value, step)?;
            acc(&at.grads, cfg.lambda_at);
        }
    }
    if cfg.lambda_vat > 0.0 {
        let target = clean_distribution(net, store, vat_batch)?;
        let r = vat_perturbation(net, store, vat_batch, &target, cfg.xi, cfg.epsilon_vat, cfg.power_iterations, rng)?;
        let vat = loss_vat(net, store, vat_batch, &r.r, &target)?;
        losses.l_vat = finite("vat", vat.value, step)?;
        acc(&vat.grads, cfg.lambda_vat);
    }
    losses.l_mix = cfg.lambda_ml * losses.l_ml + cfg.lambda_at * losses.l_at + cfg.lambda_vat * losses.l_vat;
    finite("mix", losses.l_mix, step)?;
    if net.config.freeze_embeddings {
        grads[net.modules.embedding.0].fill(0.0);
    }
    Ok(StepResult { losses, grads })
}

/// Stratified holdout: about `fraction` of each class, at least one example
/// per class when that class has two or more.
pub fn stratified_holdout<R: Rng + ?Sized>(examples: &[Example], fraction: f64, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let mut keep = Vec::new();
    let mut held = Vec::new();
    for class in [Label::Fake, Label::Genuine] {
        let mut idx: Vec<usize> = (0..examples.len()).filter(|&i| examples[i].label == Some(class)).collect();
        idx.shuffle(rng);
        let mut n = (fraction * idx.len() as f64).round() as usize;
        if fraction > 0.0 && n == 0 && idx.len() >= 2 {
            n = 1;
        }
        held.extend_from_slice(&idx[..n]);
        keep.extend_from_slice(&idx[n..]);
    }
    keep.sort_unstable();
    held.sort_unstable();
    (keep, held)
}

/// Cycles through a shuffled index list, reshuffling at each pass.
struct Sampler {
    order: Vec<usize>,
    cursor: usize,
}

impl Sampler {
    fn new(order: Vec<usize>) -> Self {
        let cursor = order.len();
        Self { order, cursor }
    }

    fn take<R: Rng + ?Sized>(&mut self, n: usize, rng: &mut R) -> Vec<usize> {
        let mut out = Vec::with_capacity(n);
        while out.len() < n && !self.order.is_empty() {
            if self.cursor == self.order.len() {
                self.order.shuffle(rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

/// Eval-mode predictions in chunks.
pub fn predict_all(net: &Network<f64>, examples: &[Example]) -> Result<Vec<crate::network::Prediction>> {
    let mut out = Vec::with_capacity(examples.len());
    for chunk in examples.chunks(64) {
        let refs: Vec<&Example> = chunk.iter().collect();
        out.extend(net.predict(&Batch::new(&refs)?)?);
    }
    Ok(out)
}

fn validation_metrics(net: &Network<f64>, examples: &[Example]) -> Result<Metrics> {
    let preds = predict_all(net, examples)?;
    let truth: Vec<Label> = examples.iter().map(|e| e.label.expect("validation examples are labelled")).collect();
    let predicted: Vec<Label> = preds.iter().map(|p| p.label).collect();
    Metrics::from_labels(&truth, &predicted)
}

pub struct TrainOutcome {
    /// Best-validation weights, or the final ones without a validation set.
    pub network: Network<f64>,
    pub history: Vec<HistoryRow>,
    pub best_step: usize,
    pub best_val_f1: Option<f64>,
    pub stopped_early: bool,
    /// Tweet ids held out for validation.
    pub validation_ids: Vec<String>,
}

pub fn train(initial: Network<f64>, labelled: &[Example], unlabelled: &[Example], cfg: &TrainingConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if labelled.is_empty() {
        return Err(Error::Empty("labelled training set"));
    }
    if let Some(e) = labelled.iter().find(|e| e.label.is_none()) {
        return Err(Error::Invalid(format!("example {} in the labelled set has no label", e.tweet_id)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (train_idx, val_idx) = stratified_holdout(labelled, cfg.validation_fraction, &mut rng);
    if train_idx.is_empty() {
        return Err(Error::Empty("training set after validation holdout"));
    }
    let validation: Vec<Example> = val_idx.iter().map(|&i| labelled[i].clone()).collect();

    let mut net = initial;
    let mut adam = Adam::new(&net.store, cfg.learning_rate, cfg.beta1, cfg.beta2);
    let mut lab = Sampler::new(train_idx);
    let mut unl = Sampler::new((0..unlabelled.len()).collect());
    let n_unl = (cfg.batch_size as f64 * cfg.unlabelled_ratio).round() as usize;

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, Network<f64>)> = None;
    let (mut since_best, mut since_decay) = (0usize, 0usize);
    let mut stopped_early = false;

    for step in 1..=cfg.max_steps {
        let li = lab.take(cfg.batch_size, &mut rng);
        let ui = if cfg.lambda_vat > 0.0 { unl.take(n_unl, &mut rng) } else { Vec::new() };
        let lrefs: Vec<&Example> = li.iter().map(|&i| &labelled[i]).collect();
        let lbatch = Batch::new(&lrefs)?;
        let vbatch = if ui.is_empty() {
            lbatch.clone()
        } else {
            let all: Vec<&Example> = lrefs.iter().copied().chain(ui.iter().map(|&i| &unlabelled[i])).collect();
            Batch::new(&all)?
        };
        let StepResult { losses, mut grads } = mixed_objective(&net, &lbatch, &vbatch, cfg, step, &mut rng)?;
        let grad_norm = global_norm(&grads);
        clip_global_norm(&mut grads, cfg.clip_norm);
        let clipped_norm = global_norm(&grads);
        adam.step(&mut net.store, &grads);

        let mut row = HistoryRow {
            step,
            l_ml: losses.l_ml,
            l_at: losses.l_at,
            l_vat: losses.l_vat,
            l_mix: losses.l_mix,
            grad_norm,
            clipped_norm,
            learning_rate: adam.lr,
            val_accuracy: None,
            val_f1: None,
        };
        if !validation.is_empty() && (step % cfg.eval_every == 0 || step == cfg.max_steps) {
            let m = validation_metrics(&net, &validation)?;
            row.val_accuracy = Some(m.accuracy);
            row.val_f1 = Some(m.macro_f1);
            if best.as_ref().is_none_or(|(f, _, _)| m.macro_f1 > *f) {
                best = Some((m.macro_f1, step, net.clone()));
                since_best = 0;
                since_decay = 0;
            } else {
                since_best += 1;
                since_decay += 1;
                if since_decay >= cfg.plateau {
                    adam.lr *= cfg.decay_factor;
                    since_decay = 0;
                    log::info!("step {step}: validation plateau, learning rate now {}", adam.lr);
                }
            }
            log::debug!("step {step}: mix {:.4} val acc {:.4} f1 {:.4}", losses.l_mix, m.accuracy, m.macro_f1);
        }
        history.push(row);
        if since_best >= cfg.patience {
            stopped_early = true;
            log::info!("early stop at step {step}");
            break;
        }
    }

    let validation_ids = validation.iter().map(|e| e.tweet_id.clone()).collect();
    Ok(match best {
        Some((f1, step, network)) => TrainOutcome { network, history, best_step: step, best_val_f1: Some(f1), stopped_early, validation_ids },
        None => TrainOutcome { best_step: history.len(), network: net, history, best_val_f1: None, stopped_early, validation_ids },
    })
}
