use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::embedding::fnv1a;
use crate::error::{Error, Result};
use crate::text::tokenize;

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";
pub const MAX_SEQ_LEN: usize = 128;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    freqs: Vec<u64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Top `max_size - 2` tokens of the tokenized corpus by frequency, ties
    /// broken lexicographically, after the padding and unknown entries.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a str>, max_size: usize) -> Result<Self> {
        if max_size < 2 {
            return Err(Error::Invalid(format!("vocabulary size {max_size} leaves no room for <pad>/<unk>")));
        }
        let mut counts: HashMap<String, u64> = HashMap::new();
        for text in corpus {
            for tok in tokenize(text) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        if counts.is_empty() {
            return Err(Error::Empty("vocabulary corpus"));
        }
        let mut ranked: Vec<(String, u64)> = counts.into_iter().filter(|(t, _)| t != PAD_TOKEN && t != UNK_TOKEN).collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        ranked.truncate(max_size - 2);
        let mut tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let mut freqs = vec![0, 0];
        for (t, f) in ranked {
            tokens.push(t);
            freqs.push(f);
        }
        Ok(Self::from_parts(tokens, freqs))
    }

    fn from_parts(tokens: Vec<String>, freqs: Vec<u64>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, freqs, index }
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn freqs(&self) -> &[u64] {
        &self.freqs
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    /// Token ids truncated to [`MAX_SEQ_LEN`]; text without tokens becomes a
    /// single padding step.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let mut ids: Vec<usize> = tokenize(text).iter().take(MAX_SEQ_LEN).map(|t| self.id(t)).collect();
        if ids.is_empty() {
            ids.push(PAD);
        }
        ids
    }

    pub fn hash(&self) -> String {
        let mut joined = String::new();
        for t in &self.tokens {
            joined.push_str(t);
            joined.push('\n');
        }
        format!("{:016x}", fnv1a(joined.as_bytes()))
    }

    /// `token<TAB>id<TAB>frequency` per line, in id order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (i, (t, f)) in self.tokens.iter().zip(&self.freqs).enumerate() {
            let _ = writeln!(out, "{t}\t{i}\t{f}");
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut tokens = Vec::new();
        let mut freqs = Vec::new();
        for (n, line) in content.lines().enumerate() {
            let parts: Vec<&str> = line.split('\t').collect();
            let bad = || Error::Invalid(format!("{}:{}: expected token, id, frequency", path.display(), n + 1));
            if parts.len() != 3 {
                return Err(bad());
            }
            let id: usize = parts[1].parse().map_err(|_| bad())?;
            if id != tokens.len() {
                return Err(Error::Invalid(format!("{}:{}: ids must be dense and ordered", path.display(), n + 1)));
            }
            tokens.push(parts[0].to_string());
            freqs.push(parts[2].parse().map_err(|_| bad())?);
        }
        if tokens.first().map(String::as_str) != Some(PAD_TOKEN) {
            return Err(Error::Invalid("vocabulary must start with <pad>".into()));
        }
        Ok(Self::from_parts(tokens, freqs))
    }
}

/// Random `V × D` embedding table with an all-zero padding row.
pub fn init_embeddings<R: Rng + ?Sized>(vocab_size: usize, dim: usize, rng: &mut R) -> Array2<f64> {
    let mut e = crate::params::normal::<f64, _>(vocab_size, dim, 0.1, rng);
    e.row_mut(PAD).fill(0.0);
    e
}

/// Text format: a `V D` header line, then one row of `D` values per token id.
pub fn save_embeddings(e: &Array2<f64>, path: &Path) -> Result<()> {
    let mut out = format!("{} {}\n", e.nrows(), e.ncols());
    for row in e.rows() {
        let line: Vec<String> = row.iter().map(|x| format!("{x:e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: &Path) -> Result<Array2<f64>> {
    let content = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = content.lines();
    let header: Vec<usize> = lines
        .next()
        .unwrap_or("")
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Invalid(format!("{}: bad shape header", path.display())))?;
    let [v, d] = header[..] else {
        return Err(Error::Invalid(format!("{}: shape header must be `V D`", path.display())));
    };
    let mut data = Vec::with_capacity(v * d);
    for line in lines.by_ref().take(v) {
        for x in line.split_whitespace() {
            data.push(x.parse::<f64>().map_err(|_| Error::Invalid(format!("{}: bad value {x:?}", path.display())))?);
        }
    }
    Array2::from_shape_vec((v, d), data).map_err(|_| Error::Shape {
        layer: "embedding file".into(),
        expected: format!("{v}x{d}"),
        got: "ragged rows".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn frequency_then_lexicographic() {
        let v = Vocabulary::build(["a a b"], 4).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "a", "b"]);
        let v = Vocabulary::build(["c b a c"], 4).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "c", "a"]);
    }

    #[test]
    fn unknown_maps_to_unk() {
        let v = Vocabulary::build(["a a b"], 4).unwrap();
        assert_eq!(v.id("zebra"), UNK);
        assert_eq!(v.encode("a zebra"), vec![2, UNK]);
    }

    #[test]
    fn deterministic_and_empty_fails() {
        let corpus = ["the cat sat", "on the mat", "cat cat"];
        assert_eq!(Vocabulary::build(corpus, 10).unwrap(), Vocabulary::build(corpus, 10).unwrap());
        assert!(Vocabulary::build(std::iter::empty(), 10).is_err());
    }

    #[test]
    fn encode_truncates_and_pads() {
        let v = Vocabulary::build(["a"], 4).unwrap();
        let long = vec!["a"; 300].join(" ");
        assert_eq!(v.encode(&long).len(), MAX_SEQ_LEN);
        assert_eq!(v.encode(""), vec![PAD]);
    }

    #[test]
    fn files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let v = Vocabulary::build(["x y y z z z"], 10).unwrap();
        v.save(&dir.path().join("v.tsv")).unwrap();
        let back = Vocabulary::load(&dir.path().join("v.tsv")).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.id("z"), 2);

        let e = init_embeddings(v.len(), 3, &mut rand_chacha::ChaCha8Rng::seed_from_u64(1));
        assert!(e.row(PAD).iter().all(|x| *x == 0.0));
        save_embeddings(&e, &dir.path().join("e.txt")).unwrap();
        assert_eq!(load_embeddings(&dir.path().join("e.txt")).unwrap(), e);
    }
}
