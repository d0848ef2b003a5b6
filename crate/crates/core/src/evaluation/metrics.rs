use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};

/// 2×2 confusion counts with fake as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_labels(truth: &[Label], predicted: &[Label]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape { layer: "metrics".into(), expected: truth.len().to_string(), got: predicted.len().to_string() });
        }
        let mut c = Confusion::default();
        for (t, p) in truth.iter().zip(predicted) {
            match (t, p) {
                (Label::Fake, Label::Fake) => c.tp += 1,
                (Label::Genuine, Label::Fake) => c.fp += 1,
                (Label::Fake, Label::Genuine) => c.fn_ += 1,
                (Label::Genuine, Label::Genuine) => c.tn += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    /// Same counts with the genuine class taken as positive.
    pub fn swapped(&self) -> Self {
        Self { tp: self.tn, fp: self.fn_, fn_: self.fp, tn: self.tp }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r > 0.0 {
        2.0 * p * r / (p + r)
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Fake-class precision, recall and F1.
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: Confusion,
}

impl Metrics {
    pub fn from_confusion(c: Confusion) -> Self {
        let class = |c: &Confusion| {
            let p = ratio(c.tp, c.tp + c.fp);
            let r = ratio(c.tp, c.tp + c.fn_);
            (p, r, f1(p, r))
        };
        let (p, r, f) = class(&c);
        let (pg, rg, fg) = class(&c.swapped());
        Self {
            accuracy: ratio(c.tp + c.tn, c.total()),
            precision: p,
            recall: r,
            f1: f,
            macro_precision: (p + pg) / 2.0,
            macro_recall: (r + rg) / 2.0,
            macro_f1: (f + fg) / 2.0,
            confusion: c,
        }
    }

    pub fn from_labels(truth: &[Label], predicted: &[Label]) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::Empty("evaluation set"));
        }
        Ok(Self::from_confusion(Confusion::from_labels(truth, predicted)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_confusion() {
        let m = Metrics::from_confusion(Confusion { tp: 8, fp: 2, fn_: 1, tn: 9 });
        assert!((m.precision - 0.8).abs() < 1e-15);
        assert!((m.recall - 8.0 / 9.0).abs() < 1e-15);
        let f = 2.0 * 0.8 * (8.0 / 9.0) / (0.8 + 8.0 / 9.0);
        assert!((m.f1 - f).abs() < 1e-15);
        assert!((m.accuracy - 17.0 / 20.0).abs() < 1e-15);
        // genuine class: precision 9/10, recall 9/11
        let fg = 2.0 * 0.9 * (9.0 / 11.0) / (0.9 + 9.0 / 11.0);
        assert!((m.macro_f1 - (f + fg) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_predictions() {
        let truth = [Label::Fake, Label::Genuine, Label::Fake];
        let m = Metrics::from_labels(&truth, &truth).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.f1, m.macro_f1, m.macro_precision, m.macro_recall] {
            assert_eq!(v, 1.0);
        }
    }

    #[test]
    fn empty_and_mismatched_inputs() {
        assert!(Metrics::from_labels(&[], &[]).is_err());
        assert!(Metrics::from_labels(&[Label::Fake], &[]).is_err());
    }

    #[test]
    fn no_positive_predictions_give_zero_not_nan() {
        let m = Metrics::from_confusion(Confusion { tp: 0, fp: 0, fn_: 3, tn: 5 });
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.f1, 0.0);
    }

    proptest! {
        #[test]
        fn metrics_agree_with_direct_formulas(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..200)) {
            let lab = |b: bool| if b { Label::Fake } else { Label::Genuine };
            let truth: Vec<Label> = pairs.iter().map(|p| lab(p.0)).collect();
            let pred: Vec<Label> = pairs.iter().map(|p| lab(p.1)).collect();
            let m = Metrics::from_labels(&truth, &pred).unwrap();
            let correct = pairs.iter().filter(|p| p.0 == p.1).count();
            prop_assert_eq!(m.accuracy, correct as f64 / pairs.len() as f64);
            let tp = pairs.iter().filter(|p| p.0 && p.1).count();
            let pp = pairs.iter().filter(|p| p.1).count();
            let ap = pairs.iter().filter(|p| p.0).count();
            let precision = if pp == 0 { 0.0 } else { tp as f64 / pp as f64 };
            let recall = if ap == 0 { 0.0 } else { tp as f64 / ap as f64 };
            prop_assert_eq!(m.precision, precision);
            prop_assert_eq!(m.recall, recall);
            if precision + recall > 0.0 {
                prop_assert_eq!(m.f1, 2.0 * precision * recall / (precision + recall));
            }
            prop_assert_eq!(m.confusion.total(), pairs.len());
        }
    }
}
