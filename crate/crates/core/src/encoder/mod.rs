//! Vocabulary, word embeddings, BiLSTM text encoder with attention pooling,
//! and the external-knowledge projection.
//!
//! Batches are time-major: step `t` is a `B × D` block of embeddings plus a
//! `B × 1` mask that is 1 while `t` is inside the sequence. Sequences are
//! left-aligned, so the backward direction starts in padding and keeps its
//! zero state until it reaches the last real token.

pub mod vocab;
pub mod word2vec;

use ndarray::{Array2, NdFloat};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::layers::Dense;
use crate::params::{xavier_uniform, Binder, ParamId, ParamStore};

pub use vocab::{Vocabulary, MAX_SEQ_LEN, PAD, UNK};
pub use word2vec::{finetune_embeddings, SkipGramConfig};

/// Score added to padded attention positions.
const MASKED: f64 = -1e9;

/// One LSTM direction; gates are packed `[input, forget, cell, output]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCell {
    pub wx: ParamId,
    pub wh: ParamId,
    pub b: ParamId,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new<T: NdFloat, R: Rng + ?Sized>(store: &mut ParamStore<T>, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        let wx = store.add(format!("{name}.wx"), xavier_uniform(input, 4 * hidden, rng));
        let wh = store.add(format!("{name}.wh"), xavier_uniform(hidden, 4 * hidden, rng));
        let b = store.add(format!("{name}.b"), Array2::zeros((1, 4 * hidden)));
        Self { wx, wh, b, hidden }
    }

    fn step<T: NdFloat>(&self, g: &mut Graph<T>, p: &mut Binder<'_, T>, x: Var, h: Var, c: Var, mask: Var) -> (Var, Var) {
        let hd = self.hidden;
        let (wx, wh, b) = (p.var(g, self.wx), p.var(g, self.wh), p.var(g, self.b));
        let zx = g.matmul(x, wx);
        let zh = g.matmul(h, wh);
        let z = g.add(zx, zh);
        let z = g.add_row(z, b);
        let zi = g.slice_cols(z, 0, hd);
        let zf = g.slice_cols(z, hd, 2 * hd);
        let zg = g.slice_cols(z, 2 * hd, 3 * hd);
        let zo = g.slice_cols(z, 3 * hd, 4 * hd);
        let i = g.sigmoid(zi);
        let f = g.sigmoid(zf);
        let cand = g.tanh(zg);
        let o = g.sigmoid(zo);
        let fc = g.mul(f, c);
        let ig = g.mul(i, cand);
        let c_new = g.add(fc, ig);
        let tc = g.tanh(c_new);
        let h_new = g.mul(o, tc);
        // masked steps carry the previous state through unchanged
        let dh = g.sub(h_new, h);
        let dh = g.mul_col(dh, mask);
        let h_out = g.add(h, dh);
        let dc = g.sub(c_new, c);
        let dc = g.mul_col(dc, mask);
        let c_out = g.add(c, dc);
        (h_out, c_out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiLstm {
    pub forward: LstmCell,
    pub backward: LstmCell,
}

/// Graph handles for an encoded batch.
pub struct EncodedVars {
    /// Per step `B × 2H`, `h_ft ⊕ h_bt`.
    pub h: Vec<Var>,
    /// `B × 2H`, final forward state ⊕ final backward state.
    pub f: Var,
}

impl BiLstm {
    pub fn new<T: NdFloat, R: Rng + ?Sized>(store: &mut ParamStore<T>, name: &str, input: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            forward: LstmCell::new(store, &format!("{name}.fwd"), input, hidden, rng),
            backward: LstmCell::new(store, &format!("{name}.bwd"), input, hidden, rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.forward.hidden
    }

    pub fn encode<T: NdFloat>(&self, g: &mut Graph<T>, p: &mut Binder<'_, T>, xs: &[Var], masks: &[Var]) -> EncodedVars {
        assert!(!xs.is_empty(), "encoder needs at least one step");
        assert_eq!(xs.len(), masks.len());
        let batch = g.value(xs[0]).nrows();
        let hd = self.hidden();
        let zeros = || Array2::<T>::zeros((batch, hd));

        let (mut h, mut c) = (g.leaf(zeros()), g.leaf(zeros()));
        let mut hf = Vec::with_capacity(xs.len());
        for t in 0..xs.len() {
            (h, c) = self.forward.step(g, p, xs[t], h, c, masks[t]);
            hf.push(h);
        }
        let f_fwd = h;

        let (mut h, mut c) = (g.leaf(zeros()), g.leaf(zeros()));
        let mut hb = vec![h; xs.len()];
        for t in (0..xs.len()).rev() {
            (h, c) = self.backward.step(g, p, xs[t], h, c, masks[t]);
            hb[t] = h;
        }
        let f_bwd = h;

        let h = hf.iter().zip(&hb).map(|(&a, &b)| g.concat_cols(&[a, b])).collect();
        let f = g.concat_cols(&[f_fwd, f_bwd]);
        EncodedVars { h, f }
    }
}

/// Additive mask bias per step: 0 inside the sequence, a large negative score outside.
pub fn attention_bias<T: NdFloat>(masks: &[Array2<T>]) -> Array2<T> {
    let batch = masks.first().map_or(0, |m| m.nrows());
    Array2::from_shape_fn((batch, masks.len()), |(b, t)| {
        if masks[t][[b, 0]] > T::zero() {
            T::zero()
        } else {
            T::from(MASKED).unwrap()
        }
    })
}

/// Single-query attention: `α = softmax_j ⟨h_j, f⟩`, `v = Σ_j α_j h_j`.
/// Returns `(v, α)` with `α` as a `B × N` node.
pub fn attention_pool<T: NdFloat>(g: &mut Graph<T>, h: &[Var], f: Var, bias: Option<&Array2<T>>) -> (Var, Var) {
    let scores: Vec<Var> = h
        .iter()
        .map(|&hj| {
            let prod = g.mul(hj, f);
            g.sum_cols(prod)
        })
        .collect();
    let mut s = g.concat_cols(&scores);
    if let Some(b) = bias {
        let b = g.leaf(b.clone());
        s = g.add(s, b);
    }
    let alpha = g.softmax_rows(s);
    let mut v: Option<Var> = None;
    for (j, &hj) in h.iter().enumerate() {
        let aj = g.slice_cols(alpha, j, j + 1);
        let term = g.mul_col(hj, aj);
        v = Some(match v {
            Some(acc) => g.add(acc, term),
            None => term,
        });
    }
    (v.expect("at least one step"), alpha)
}

/// Affine projection of the external-knowledge embedding.
pub fn encode_ek<T: NdFloat>(g: &mut Graph<T>, p: &mut Binder<'_, T>, layer: &Dense, e_ek: Var) -> Var {
    layer.forward(g, p, e_ek)
}

/// Eval-time result for one sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedText<T> {
    /// `N × 2H`.
    pub h: Array2<T>,
    pub f: Vec<T>,
    pub v_tt: Vec<T>,
    pub attention: Vec<T>,
}

/// Encodes one id sequence with embedding table `embedding` (a parameter in `store`).
pub fn encode_text<T: NdFloat>(store: &ParamStore<T>, embedding: ParamId, lstm: &BiLstm, ids: &[usize]) -> crate::Result<EncodedText<T>> {
    if ids.is_empty() {
        return Err(crate::Error::Empty("token sequence"));
    }
    if ids.len() > MAX_SEQ_LEN {
        return Err(crate::Error::Shape {
            layer: "encoder".into(),
            expected: format!("at most {MAX_SEQ_LEN} steps"),
            got: ids.len().to_string(),
        });
    }
    let mut g = Graph::new();
    let mut p = Binder::new(store);
    let table = p.var(&mut g, embedding);
    let emb = g.embed(table, ids);
    let one = Array2::<T>::ones((1, 1));
    let xs: Vec<Var> = (0..ids.len()).map(|t| g.slice_rows(emb, t, t + 1)).collect();
    let masks: Vec<Var> = (0..ids.len()).map(|_| g.leaf(one.clone())).collect();
    let enc = lstm.encode(&mut g, &mut p, &xs, &masks);
    let (v, alpha) = attention_pool(&mut g, &enc.h, enc.f, None);
    let two_h = 2 * lstm.hidden();
    let mut h = Array2::zeros((ids.len(), two_h));
    for (t, &ht) in enc.h.iter().enumerate() {
        h.row_mut(t).assign(&g.value(ht).row(0));
    }
    Ok(EncodedText {
        h,
        f: g.value(enc.f).row(0).to_vec(),
        v_tt: g.value(v).row(0).to_vec(),
        attention: g.value(alpha).row(0).to_vec(),
    })
}
