//! Krippendorff's alpha for nominal data via the coincidence matrix.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Nominal-scale alpha over an annotator × item matrix; `None` marks a
/// missing annotation. Items with fewer than two values are not pairable and
/// are ignored. Returns 1.0 when every pairable value falls in one category.
pub fn krippendorff_alpha<C: Ord + Clone>(annotations: &[Vec<Option<C>>]) -> Result<f64> {
    if annotations.len() < 2 {
        return Err(Error::Undefined(format!("alpha needs at least 2 annotators, got {}", annotations.len())));
    }
    let items = annotations[0].len();
    if annotations.iter().any(|row| row.len() != items) {
        return Err(Error::Invalid("annotator rows differ in length".into()));
    }

    let mut categories: BTreeMap<C, usize> = BTreeMap::new();
    for value in annotations.iter().flatten().flatten() {
        let next = categories.len();
        categories.entry(value.clone()).or_insert(next);
    }
    let k = categories.len();
    let mut coincidence = vec![vec![0.0_f64; k]; k];

    for item in 0..items {
        let values: Vec<usize> = annotations
            .iter()
            .filter_map(|row| row[item].as_ref())
            .map(|v| categories[v])
            .collect();
        let m = values.len();
        if m < 2 {
            continue;
        }
        let weight = 1.0 / (m as f64 - 1.0);
        for (a, &c) in values.iter().enumerate() {
            for (b, &d) in values.iter().enumerate() {
                if a != b {
                    coincidence[c][d] += weight;
                }
            }
        }
    }

    let marginals: Vec<f64> = coincidence.iter().map(|row| row.iter().sum()).collect();
    let n: f64 = marginals.iter().sum();
    if n < 2.0 {
        return Err(Error::Undefined("fewer than 2 pairable annotations".into()));
    }
    let mut observed = 0.0;
    let mut expected = 0.0;
    for c in 0..k {
        for d in 0..k {
            if c != d {
                observed += coincidence[c][d];
                expected += marginals[c] * marginals[d];
            }
        }
    }
    if expected == 0.0 {
        return Ok(1.0);
    }
    Ok(1.0 - (n - 1.0) * observed / expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_agreement_is_one() {
        let row: Vec<Option<u8>> = (0..10).map(|i| Some(i % 2)).collect();
        assert_eq!(krippendorff_alpha(&[row.clone(), row.clone(), row]).unwrap(), 1.0);
    }

    #[test]
    fn hand_computed_four_items() {
        // A: a a b b / B: a b b b
        // coincidences o_aa=2, o_ab=o_ba=1, o_bb=4; n_a=3, n_b=5, n=8
        // alpha = 1 - (n-1) * 2 / (2 * n_a * n_b) = 1 - 14/30 = 8/15
        let a = vec![Some('a'), Some('a'), Some('b'), Some('b')];
        let b = vec![Some('a'), Some('b'), Some('b'), Some('b')];
        let alpha = krippendorff_alpha(&[a, b]).unwrap();
        assert!((alpha - 8.0 / 15.0).abs() < 1e-9);
    }

    #[test]
    fn missing_values_are_skipped() {
        let a = vec![Some(1), Some(1), None, Some(2)];
        let b = vec![Some(1), None, Some(2), Some(2)];
        // only items 0 and 3 are pairable and they agree
        assert_eq!(krippendorff_alpha(&[a, b]).unwrap(), 1.0);
    }

    #[test]
    fn independent_annotators_are_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a: Vec<Option<u8>> = (0..1000).map(|_| Some(rng.random_range(0..2))).collect();
        let b: Vec<Option<u8>> = (0..1000).map(|_| Some(rng.random_range(0..2))).collect();
        assert!(krippendorff_alpha(&[a, b]).unwrap().abs() < 0.1);
    }

    #[test]
    fn undefined_cases() {
        assert!(krippendorff_alpha(&[vec![Some(1)]]).is_err());
        assert!(krippendorff_alpha(&[vec![Some(1), None], vec![None, Some(1)]]).is_err());
    }

    proptest! {
        #[test]
        fn duplicated_columns_agree_exactly(labels in proptest::collection::vec(proptest::option::of(0u8..3), 2..40)) {
            prop_assume!(labels.iter().filter(|l| l.is_some()).count() >= 1);
            let alpha = krippendorff_alpha(&[labels.clone(), labels]).unwrap();
            prop_assert_eq!(alpha, 1.0);
        }

        #[test]
        fn alpha_is_bounded(a in proptest::collection::vec(0u8..2, 4..60), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let b: Vec<u8> = a.iter().map(|&x| if rng.random_bool(0.3) { 1 - x } else { x }).collect();
            let alpha = krippendorff_alpha(&[a.into_iter().map(Some).collect(), b.into_iter().map(Some).collect()]).unwrap();
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&alpha));
        }
    }
}
