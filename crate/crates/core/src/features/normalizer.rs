use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-dimension standardization fitted on training vectors.
///
/// Dimensions with zero variance keep their raw values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Empty("normalizer fit set"));
        };
        let dim = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for (i, r) in rows.iter().enumerate() {
            if r.len() != dim {
                return Err(Error::Shape { layer: format!("normalizer row {i}"), expected: dim.to_string(), got: r.len().to_string() });
            }
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std = var.into_iter().map(|v| (v / n).sqrt()).collect();
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn passthrough(&self, d: usize) -> bool {
        self.std[d] <= 1e-12
    }

    pub fn apply(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.dim() {
            return Err(Error::Shape { layer: "normalizer".into(), expected: self.dim().to_string(), got: v.len().to_string() });
        }
        Ok(v.iter()
            .enumerate()
            .map(|(d, &x)| if self.passthrough(d) { x } else { (x - self.mean[d]) / self.std[d] })
            .collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&s)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_column_passes_through() {
        let n = Normalizer::fit(&[vec![3.0, 0.0], vec![3.0, 2.0]]).unwrap();
        assert_eq!(n.apply(&[3.0, 0.0]).unwrap(), vec![3.0, -1.0]);
        assert_eq!(n.apply(&[3.0, 2.0]).unwrap(), vec![3.0, 1.0]);
    }

    #[test]
    fn empty_fit_fails() {
        assert!(Normalizer::fit(&[]).is_err());
    }

    #[test]
    fn wrong_length_fails() {
        let n = Normalizer::fit(&[vec![1.0, 2.0]]).unwrap();
        assert!(n.apply(&[1.0]).is_err());
        assert!(Normalizer::fit(&[vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn save_load_bit_identical() {
        let rows = vec![vec![0.1, 7.3, -2.0], vec![1.7, 2.2, 9.5], vec![-0.4, 0.0, 1.0 / 3.0]];
        let n = Normalizer::fit(&rows).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("norm.json");
        n.save(&p).unwrap();
        let back = Normalizer::load(&p).unwrap();
        for r in &rows {
            let a = n.apply(r).unwrap();
            let b = back.apply(r).unwrap();
            assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
    }

    proptest! {
        #[test]
        fn standardized_columns(rows in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 3), 2..30)) {
            let n = Normalizer::fit(&rows).unwrap();
            let out: Vec<Vec<f64>> = rows.iter().map(|r| n.apply(r).unwrap()).collect();
            for d in 0..3 {
                let col: Vec<f64> = out.iter().map(|r| r[d]).collect();
                if n.std[d] <= 1e-12 {
                    prop_assert!(col.iter().zip(&rows).all(|(a, r)| *a == r[d]));
                    continue;
                }
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                let sd = (col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / col.len() as f64).sqrt();
                prop_assert!(mean.abs() < 1e-6);
                prop_assert!((sd - 1.0).abs() < 1e-6);
            }
        }
    }
}
