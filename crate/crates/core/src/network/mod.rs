//! Fusion network: BiLSTM text encoding, tweet/user feature paths with an
//! optional cross-stitch unit, the external-knowledge projection, and a
//! dense classifier head over the two classes (index 0 = fake).

pub mod checkpoint;

use ndarray::{Array2, NdFloat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::dataset::Label;
use crate::encoder::{attention_bias, attention_pool, encode_ek, BiLstm};
use crate::error::{Error, Result};
use crate::layers::{Dense, ReluStack};
use crate::params::{normal, Binder, ParamId, ParamStore};

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT_VERSION};

/// Dense layout for the tweet (`x_TF`) and user (`x_UF`) feature vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureLayout {
    /// `x_TF ⊕ x_UF` through one shared stack.
    Joined { widths: Vec<usize> },
    /// Separate stacks. The cross-stitch unit, when enabled, mixes the
    /// outputs of the first layer of each stack. With `early_text_fusion`
    /// the text vector joins the tweet path before its remaining layers.
    Split { tweet: Vec<usize>, user: Vec<usize>, cross_stitch: bool, early_text_fusion: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub tweet_features: usize,
    pub user_features: usize,
    pub ek_dim: usize,
    pub ek_width: usize,
    pub layout: FeatureLayout,
    pub attention: bool,
    pub head_width: usize,
    pub dropout: f64,
    #[serde(default)]
    pub freeze_embeddings: bool,
}

impl NetworkConfig {
    /// Layout with the best ablation result: split paths, cross-stitch, early text fusion.
    pub fn standard(vocab_size: usize, ek_dim: usize) -> Self {
        Self {
            vocab_size,
            embed_dim: 300,
            hidden: 512,
            tweet_features: crate::features::TWEET_FEATURES,
            user_features: crate::features::USER_FEATURES,
            ek_dim,
            ek_width: 64,
            layout: FeatureLayout::Split {
                tweet: vec![64, 256],
                user: vec![64, 256, 256],
                cross_stitch: true,
                early_text_fusion: true,
            },
            attention: true,
            head_width: 128,
            dropout: 0.3,
            freeze_embeddings: false,
        }
    }

    /// The six architecture-ablation rows, in order, on top of `base`.
    pub fn ablation_rows(base: &NetworkConfig) -> Vec<(String, NetworkConfig)> {
        let with = |layout: FeatureLayout, attention: bool| NetworkConfig { layout, attention, ..base.clone() };
        let joined = |w: &[usize]| FeatureLayout::Joined { widths: w.to_vec() };
        vec![
            ("TF+UF(128)".into(), with(joined(&[128]), false)),
            ("TF+UF(64,256) + att".into(), with(joined(&[64, 256]), true)),
            (
                "TF(64,256) x UF(64,256) + cs + att".into(),
                with(
                    FeatureLayout::Split { tweet: vec![64, 256], user: vec![64, 256], cross_stitch: true, early_text_fusion: false },
                    true,
                ),
            ),
            ("TF+UF(64,256,256,512)".into(), with(joined(&[64, 256, 256, 512]), false)),
            ("TF+UF(64,256,256,512) + att".into(), with(joined(&[64, 256, 256, 512]), true)),
            (
                "TF(64,256) x UF(64,256,256) + cs + early + att".into(),
                with(
                    FeatureLayout::Split { tweet: vec![64, 256], user: vec![64, 256, 256], cross_stitch: true, early_text_fusion: true },
                    true,
                ),
            ),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let widths: Vec<usize> = match &self.layout {
            FeatureLayout::Joined { widths } => widths.clone(),
            FeatureLayout::Split { tweet, user, .. } => {
                if tweet.is_empty() || user.is_empty() {
                    return Err(Error::Invalid("split layout needs at least one layer per path".into()));
                }
                tweet.iter().chain(user).copied().collect()
            }
        };
        let sizes = [self.vocab_size, self.embed_dim, self.hidden, self.ek_width, self.head_width];
        if widths.contains(&0) || sizes.contains(&0) || self.vocab_size < 2 {
            return Err(Error::Invalid("layer widths and sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Invalid(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum FeaturePath {
    Joined { stack: ReluStack },
    Split { tweet_first: Dense, tweet_rest: ReluStack, user: ReluStack, cross_stitch: Option<Dense>, early_text_fusion: bool },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Modules {
    pub embedding: ParamId,
    pub lstm: BiLstm,
    pub ek: Dense,
    pub features: FeaturePath,
    pub head_hidden: Dense,
    pub head_out: Dense,
}

/// Model-ready example; features already normalized.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub tweet_id: String,
    pub ids: Vec<usize>,
    pub tweet: Vec<f64>,
    pub user: Vec<f64>,
    pub ek: Vec<f64>,
    pub label: Option<Label>,
}

/// Padded, time-major batch.
#[derive(Clone, Debug)]
pub struct Batch<T> {
    /// `steps × B` ids, row `t` holding step `t` of every example (0 past the end).
    pub ids: Vec<Vec<usize>>,
    /// Per step `B × 1`, 1 while inside the sequence.
    pub masks: Vec<Array2<T>>,
    pub tweet: Array2<T>,
    pub user: Array2<T>,
    pub ek: Array2<T>,
    pub labels: Vec<Option<usize>>,
}

fn rows<T: NdFloat>(vs: &[&[f64]], name: &str) -> Result<Array2<T>> {
    let dim = vs.first().map_or(0, |v| v.len());
    if let Some(bad) = vs.iter().find(|v| v.len() != dim) {
        return Err(Error::Shape { layer: name.into(), expected: dim.to_string(), got: bad.len().to_string() });
    }
    Ok(Array2::from_shape_fn((vs.len(), dim), |(i, j)| T::from(vs[i][j]).unwrap()))
}

impl<T: NdFloat> Batch<T> {
    pub fn new(examples: &[&Example]) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::Empty("batch"));
        }
        if let Some(e) = examples.iter().find(|e| e.ids.is_empty()) {
            return Err(Error::Empty(if e.tweet_id.is_empty() { "token sequence" } else { "token sequence of an example" }));
        }
        let steps = examples.iter().map(|e| e.ids.len()).max().unwrap_or(0);
        let ids = (0..steps).map(|t| examples.iter().map(|e| e.ids.get(t).copied().unwrap_or(0)).collect()).collect();
        let masks = (0..steps)
            .map(|t| Array2::from_shape_fn((examples.len(), 1), |(b, _)| if t < examples[b].ids.len() { T::one() } else { T::zero() }))
            .collect();
        Ok(Self {
            ids,
            masks,
            tweet: rows(&examples.iter().map(|e| e.tweet.as_slice()).collect::<Vec<_>>(), "tweet features")?,
            user: rows(&examples.iter().map(|e| e.user.as_slice()).collect::<Vec<_>>(), "user features")?,
            ek: rows(&examples.iter().map(|e| e.ek.as_slice()).collect::<Vec<_>>(), "external knowledge")?,
            labels: examples.iter().map(|e| e.label.map(Label::index)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.tweet.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn steps(&self) -> usize {
        self.ids.len()
    }

    /// Number of real (unpadded) tokens of example `b`.
    pub fn length(&self, b: usize) -> usize {
        self.masks.iter().filter(|m| m[[b, 0]] > T::zero()).count()
    }
}

/// Graph handles produced by [`Network::forward`].
pub struct Forward {
    pub logits: Var,
    pub log_probs: Var,
    pub probs: Var,
    /// Per-step `B × D` leaves added to the word embeddings; their gradient is
    /// the gradient with respect to the embedded inputs.
    pub perturbations: Vec<Var>,
    pub attention: Option<Var>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub probabilities: [f64; 2],
    pub label: Label,
    pub confidence: f64,
}

impl Prediction {
    /// Argmax with ties going to index 0 (fake).
    pub fn from_probabilities(p: [f64; 2]) -> Self {
        let idx = if p[1] > p[0] { 1 } else { 0 };
        Self { probabilities: p, label: Label::from_index(idx), confidence: p[idx] }
    }
}

#[derive(Clone, Debug)]
pub struct Network<T> {
    pub config: NetworkConfig,
    pub store: ParamStore<T>,
    pub modules: Modules,
}

impl<T: NdFloat> Network<T> {
    pub fn new(config: NetworkConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self::build(config, &mut rng))
    }

    fn build<R: Rng + ?Sized>(config: NetworkConfig, rng: &mut R) -> Self {
        let c = &config;
        let mut store = ParamStore::new();
        let mut table: Array2<T> = normal(c.vocab_size, c.embed_dim, 0.1, rng);
        table.row_mut(crate::encoder::PAD).fill(T::zero());
        let embedding = store.add("embedding", table);
        let lstm = BiLstm::new(&mut store, "lstm", c.embed_dim, c.hidden, rng);
        let ek = Dense::new(&mut store, "ek", c.ek_dim, c.ek_width, rng);
        let text = 2 * c.hidden;
        let (features, feature_out) = match &c.layout {
            FeatureLayout::Joined { widths } => {
                let stack = ReluStack::new(&mut store, "features", c.tweet_features + c.user_features, widths, rng);
                let out = stack.output(c.tweet_features + c.user_features) + text;
                (FeaturePath::Joined { stack }, out)
            }
            FeatureLayout::Split { tweet, user, cross_stitch, early_text_fusion } => {
                let tweet_first = Dense::new(&mut store, "tweet.0", c.tweet_features, tweet[0], rng);
                let rest_in = tweet[0] + if *early_text_fusion { text } else { 0 };
                let tweet_rest = ReluStack::new(&mut store, "tweet.rest", rest_in, &tweet[1..], rng);
                let user_stack = ReluStack::new(&mut store, "user", c.user_features, user, rng);
                let cs = cross_stitch.then(|| Dense::identity(&mut store, "cross_stitch", tweet[0] + user[0]));
                let out = tweet_rest.output(rest_in) + user_stack.output(c.user_features) + if *early_text_fusion { 0 } else { text };
                (
                    FeaturePath::Split { tweet_first, tweet_rest, user: user_stack, cross_stitch: cs, early_text_fusion: *early_text_fusion },
                    out,
                )
            }
        };
        let head_hidden = Dense::new(&mut store, "head.hidden", feature_out + c.ek_width, c.head_width, rng);
        let head_out = Dense::new(&mut store, "head.out", c.head_width, 2, rng);
        let modules = Modules { embedding, lstm, ek, features, head_hidden, head_out };
        Self { config, store, modules }
    }

    /// Rebuilds the module layout for `config` and takes tensor values from
    /// `params` by name; names and shapes must match exactly.
    pub fn from_params(config: NetworkConfig, params: ParamStore<T>) -> Result<Self> {
        config.validate()?;
        let mut net = Self::build(config, &mut ChaCha8Rng::seed_from_u64(0));
        if params.len() != net.store.len() {
            return Err(Error::Shape { layer: "checkpoint".into(), expected: format!("{} tensors", net.store.len()), got: params.len().to_string() });
        }
        for id in net.store.ids().collect::<Vec<_>>() {
            let name = net.store.name(id).to_string();
            let src = params.find(&name).ok_or_else(|| Error::Invalid(format!("checkpoint lacks tensor {name}")))?;
            let value = params.get(src);
            if value.dim() != net.store.get(id).dim() {
                return Err(Error::Shape { layer: name, expected: format!("{:?}", net.store.get(id).dim()), got: format!("{:?}", value.dim()) });
            }
            *net.store.get_mut(id) = value.clone();
        }
        Ok(net)
    }

    pub fn cast<U: NdFloat>(&self) -> Network<U> {
        Network { config: self.config.clone(), store: self.store.cast(), modules: self.modules.clone() }
    }

    fn check_batch(&self, batch: &Batch<T>) -> Result<()> {
        let c = &self.config;
        for (layer, expected, got) in [
            ("tweet features", c.tweet_features, batch.tweet.ncols()),
            ("user features", c.user_features, batch.user.ncols()),
            ("external knowledge", c.ek_dim, batch.ek.ncols()),
        ] {
            if expected != got {
                return Err(Error::Shape { layer: layer.into(), expected: expected.to_string(), got: got.to_string() });
            }
        }
        if let Some(&bad) = batch.ids.iter().flatten().find(|&&id| id >= c.vocab_size) {
            return Err(Error::Shape { layer: "embedding".into(), expected: format!("id < {}", c.vocab_size), got: bad.to_string() });
        }
        if batch.steps() == 0 {
            return Err(Error::Empty("token sequence"));
        }
        Ok(())
    }

    /// Builds the forward pass. `perturbation` (per step `B × D`) is added to
    /// the word embeddings; `dropout` is the head mask (train mode), already
    /// scaled by `1 / (1 - p)`.
    pub fn forward(
        &self,
        g: &mut Graph<T>,
        p: &mut Binder<'_, T>,
        batch: &Batch<T>,
        perturbation: Option<&[Array2<T>]>,
        dropout: Option<&Array2<T>>,
    ) -> Result<Forward> {
        self.check_batch(batch)?;
        let m = &self.modules;
        let bsz = batch.len();
        let steps = batch.steps();
        let d = self.config.embed_dim;
        if let Some(r) = perturbation {
            if r.len() != steps || r.iter().any(|x| x.dim() != (bsz, d)) {
                return Err(Error::Shape { layer: "perturbation".into(), expected: format!("{steps} × ({bsz}, {d})"), got: format!("{} steps", r.len()) });
            }
        }

        let table = p.var(g, m.embedding);
        let flat: Vec<usize> = batch.ids.iter().flatten().copied().collect();
        let emb = g.embed(table, &flat);
        let mut xs = Vec::with_capacity(steps);
        let mut perturbations = Vec::with_capacity(steps);
        for t in 0..steps {
            let e_t = g.slice_rows(emb, t * bsz, (t + 1) * bsz);
            let r_t = g.leaf(perturbation.map_or_else(|| Array2::zeros((bsz, d)), |r| r[t].clone()));
            perturbations.push(r_t);
            xs.push(g.add(e_t, r_t));
        }
        let masks: Vec<Var> = batch.masks.iter().map(|mk| g.leaf(mk.clone())).collect();
        let enc = m.lstm.encode(g, p, &xs, &masks);
        let (v_tt, attention) = if self.config.attention {
            let bias = attention_bias(&batch.masks);
            let (v, a) = attention_pool(g, &enc.h, enc.f, Some(&bias));
            (v, Some(a))
        } else {
            (enc.f, None)
        };

        let x_tf = g.leaf(batch.tweet.clone());
        let x_uf = g.leaf(batch.user.clone());
        let mut parts = Vec::new();
        match &m.features {
            FeaturePath::Joined { stack } => {
                let x = g.concat_cols(&[x_tf, x_uf]);
                let f = stack.forward(g, p, x);
                parts.extend([v_tt, f]);
            }
            FeaturePath::Split { tweet_first, tweet_rest, user, cross_stitch, early_text_fusion } => {
                let t1 = tweet_first.forward(g, p, x_tf);
                let mut t = g.relu(t1);
                let u_first = &user.layers[0];
                let u1 = u_first.forward(g, p, x_uf);
                let mut u = g.relu(u1);
                if let Some(cs) = cross_stitch {
                    (t, u) = cross_stitch_apply(g, p, cs, t, u);
                }
                for l in &user.layers[1..] {
                    let z = l.forward(g, p, u);
                    u = g.relu(z);
                }
                if *early_text_fusion {
                    let joined = g.concat_cols(&[v_tt, t]);
                    let t = tweet_rest.forward(g, p, joined);
                    parts.extend([t, u]);
                } else {
                    let t = tweet_rest.forward(g, p, t);
                    parts.extend([v_tt, t, u]);
                }
            }
        }
        let ek_in = g.leaf(batch.ek.clone());
        parts.push(encode_ek(g, p, &m.ek, ek_in));

        let joined = g.concat_cols(&parts);
        let hz = m.head_hidden.forward(g, p, joined);
        let mut h = g.relu(hz);
        if let Some(mask) = dropout {
            let mk = g.leaf(mask.clone());
            h = g.mul(h, mk);
        }
        let logits = m.head_out.forward(g, p, h);
        let log_probs = g.log_softmax_rows(logits);
        let probs = g.softmax_rows(logits);
        Ok(Forward { logits, log_probs, probs, perturbations, attention })
    }

    /// Eval-mode class probabilities, one row per example.
    pub fn probabilities(&self, batch: &Batch<T>) -> Result<Array2<T>> {
        let mut g = Graph::new();
        let mut p = Binder::new(&self.store);
        let out = self.forward(&mut g, &mut p, batch, None, None)?;
        Ok(g.value(out.probs).clone())
    }

    pub fn predict(&self, batch: &Batch<T>) -> Result<Vec<Prediction>> {
        let probs = self.probabilities(batch)?;
        Ok(probs
            .rows()
            .into_iter()
            .map(|r| Prediction::from_probabilities([r[0].to_f64().unwrap(), r[1].to_f64().unwrap()]))
            .collect())
    }

    /// Inverted-dropout mask for the head, or `None` when dropout is off.
    pub fn dropout_mask<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Option<Array2<T>> {
        let rate = self.config.dropout;
        if rate <= 0.0 {
            return None;
        }
        let keep = T::from(1.0 / (1.0 - rate)).unwrap();
        Some(Array2::from_shape_simple_fn((batch_size, self.config.head_width), || {
            if rng.random::<f64>() < rate {
                T::zero()
            } else {
                keep
            }
        }))
    }
}

/// `W (a ⊕ b) + β`, split back into the widths of `a` and `b`.
pub fn cross_stitch_apply<T: NdFloat>(g: &mut Graph<T>, p: &mut Binder<'_, T>, unit: &Dense, a: Var, b: Var) -> (Var, Var) {
    let ka = g.value(a).ncols();
    let kb = g.value(b).ncols();
    assert_eq!(ka + kb, unit.input, "cross-stitch input width");
    let joined = g.concat_cols(&[a, b]);
    let out = unit.forward(g, p, joined);
    (g.slice_cols(out, 0, ka), g.slice_cols(out, ka, ka + kb))
}

/// Eval-only cross-stitch on plain vectors: `W (a ⊕ b) + β` split as `(a', b')`.
pub fn cross_stitch(a: &[f64], b: &[f64], w: &Array2<f64>, beta: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let k = a.len() + b.len();
    if w.dim() != (k, k) || beta.len() != k {
        return Err(Error::Shape { layer: "cross_stitch".into(), expected: format!("{k}x{k}"), got: format!("{:?}", w.dim()) });
    }
    let x: Vec<f64> = a.iter().chain(b).copied().collect();
    let out: Vec<f64> = (0..k).map(|i| (0..k).map(|j| w[[i, j]] * x[j]).sum::<f64>() + beta[i]).collect();
    Ok((out[..a.len()].to_vec(), out[a.len()..].to_vec()))
}

#[cfg(test)]
mod tests;
