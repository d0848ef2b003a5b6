//! Sentence-embedding interface and a deterministic offline implementation.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::text;

/// Maps a sentence to a fixed-dimension dense vector. Implementations are
/// frozen: the same input always yields the same vector.
pub trait SentenceEmbedder: Send + Sync {
    fn dim(&self) -> usize;
    fn embed(&self, text: &str) -> Result<Vec<f64>>;
}

/// Signed feature hashing of word unigrams, bigrams and character trigrams,
/// L2-normalized. Stands in for a pretrained sentence encoder where no model
/// weights are available; identical texts map to identical vectors.
#[derive(Clone, Debug)]
pub struct HashingEmbedder {
    dim: usize,
}

impl HashingEmbedder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "embedding dimension must be positive");
        Self { dim }
    }
}

impl Default for HashingEmbedder {
    fn default() -> Self {
        Self::new(256)
    }
}

pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for b in bytes {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

impl SentenceEmbedder for HashingEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>> {
        let words: Vec<String> = text::words(text).into_iter().filter(|w| !text::is_stopword(w)).collect();
        let mut v = vec![0.0; self.dim];
        let mut add = |feature: &str, weight: f64| {
            let h = fnv1a(feature.as_bytes());
            let idx = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) == 0 { 1.0 } else { -1.0 };
            v[idx] += sign * weight;
        };
        for w in &words {
            add(&format!("w:{w}"), 1.0);
            let padded: Vec<char> = format!("<{w}>").chars().collect();
            for tri in padded.windows(3) {
                add(&format!("c:{}", tri.iter().collect::<String>()), 0.25);
            }
        }
        for pair in words.windows(2) {
            add(&format!("b:{} {}", pair[0], pair[1]), 0.5);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Embedding(format!("no content words in {text:?}")));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Stacks vectors as rows and scales each row to unit length (zero rows stay zero).
pub fn unit_rows(vectors: &[Vec<f64>], dim: usize) -> Array2<f64> {
    let mut m = Array2::zeros((vectors.len(), dim));
    for (i, v) in vectors.iter().enumerate() {
        let row = Array1::from_vec(v.clone());
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            m.row_mut(i).assign(&(row / norm));
        }
    }
    m
}

/// Row-wise cosine similarity matrix between two sets of vectors.
pub fn similarity_matrix(left: &[Vec<f64>], right: &[Vec<f64>], dim: usize) -> Array2<f64> {
    unit_rows(left, dim).dot(&unit_rows(right, dim).t())
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_texts_have_unit_similarity() {
        let e = HashingEmbedder::default();
        let a = e.embed("Vaccines cause infertility").unwrap();
        let b = e.embed("Vaccines cause infertility").unwrap();
        assert!((cosine(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn related_texts_score_above_unrelated() {
        let e = HashingEmbedder::default();
        let a = e.embed("drinking bleach cures covid").unwrap();
        let b = e.embed("bleach drinking cures the virus").unwrap();
        let c = e.embed("stock markets rallied on friday").unwrap();
        assert!(cosine(&a, &b) > cosine(&a, &c));
    }

    #[test]
    fn stopword_only_text_fails_to_embed() {
        assert!(HashingEmbedder::default().embed("the and of").is_err());
    }

    #[test]
    fn similarity_matrix_matches_pairwise_cosine() {
        let vs = vec![vec![1.0, 2.0, 0.0], vec![0.0, -1.0, 3.0]];
        let m = similarity_matrix(&vs, &vs, 3);
        for i in 0..2 {
            for j in 0..2 {
                assert!((m[[i, j]] - cosine(&vs[i], &vs[j])).abs() < 1e-12);
            }
        }
    }
}
