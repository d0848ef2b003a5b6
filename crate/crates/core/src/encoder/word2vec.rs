//! Skip-gram with negative sampling over a streamed corpus of id sequences.

use ndarray::{Array2, ArrayViewMut1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::vocab::{PAD, UNK};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkipGramConfig {
    pub window: usize,
    pub negatives: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Stop after this many center words (across epochs); `None` runs every epoch fully.
    pub max_steps: Option<usize>,
    pub seed: u64,
}

impl Default for SkipGramConfig {
    fn default() -> Self {
        Self { window: 3, negatives: 5, learning_rate: 0.025, epochs: 1, max_steps: None, seed: 0 }
    }
}

const TABLE_SIZE: usize = 1 << 20;

/// Unigram^0.75 sampling table over ids ≥ 2.
fn noise_table(freqs: &[u64]) -> Vec<usize> {
    let weights: Vec<f64> = freqs.iter().enumerate().map(|(i, &f)| if i < 2 { 0.0 } else { (f as f64).powf(0.75) }).collect();
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return Vec::new();
    }
    let mut table = Vec::with_capacity(TABLE_SIZE);
    let mut acc = 0.0;
    let mut id = 0;
    for slot in 0..TABLE_SIZE {
        let target = (slot as f64 + 0.5) / TABLE_SIZE as f64 * total;
        while acc + weights[id] < target && id + 1 < weights.len() {
            acc += weights[id];
            id += 1;
        }
        table.push(id);
    }
    table
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn sgd_pair(center: &[f64], ctx: &mut ArrayViewMut1<f64>, label: f64, lr: f64, grad_center: &mut [f64]) {
    let dot: f64 = center.iter().zip(ctx.iter()).map(|(a, b)| a * b).sum();
    let g = lr * (label - sigmoid(dot));
    for ((gc, c), o) in grad_center.iter_mut().zip(center.iter()).zip(ctx.iter_mut()) {
        *gc += g * *o;
        *o += g * c;
    }
}

/// Adapts `init` to the corpus. `freqs` are the vocabulary frequencies used
/// for negative sampling. The corpus is consumed one sequence at a time and
/// re-iterated per epoch. Padding and unknown ids are never trained, and the
/// padding row stays zero.
pub fn finetune_embeddings<C>(corpus: C, init: &Array2<f64>, freqs: &[u64], config: &SkipGramConfig) -> Array2<f64>
where
    C: IntoIterator<Item = Vec<usize>> + Clone,
{
    let mut input = init.clone();
    let table = noise_table(freqs);
    if config.epochs == 0 || config.max_steps == Some(0) || table.is_empty() {
        return input;
    }
    let mut output = Array2::<f64>::zeros(init.raw_dim());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dim = init.ncols();
    let mut grad = vec![0.0; dim];
    let mut steps = 0usize;
    'outer: for _ in 0..config.epochs {
        for seq in corpus.clone() {
            for (pos, &center) in seq.iter().enumerate() {
                if center == PAD || center == UNK {
                    continue;
                }
                if config.max_steps.is_some_and(|m| steps >= m) {
                    break 'outer;
                }
                steps += 1;
                let lr = config.learning_rate;
                let lo = pos.saturating_sub(config.window);
                let hi = (pos + config.window + 1).min(seq.len());
                for (cpos, &ctx) in seq.iter().enumerate().take(hi).skip(lo) {
                    if cpos == pos || ctx == PAD || ctx == UNK {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let cv = input.row(center).to_vec();
                    sgd_pair(&cv, &mut output.row_mut(ctx), 1.0, lr, &mut grad);
                    for _ in 0..config.negatives {
                        let neg = table[rng.random_range(0..table.len())];
                        if neg == ctx {
                            continue;
                        }
                        sgd_pair(&cv, &mut output.row_mut(neg), 0.0, lr, &mut grad);
                    }
                    for (x, g) in input.row_mut(center).iter_mut().zip(&grad) {
                        *x += g;
                    }
                }
            }
        }
    }
    input.row_mut(PAD).fill(0.0);
    input
}
