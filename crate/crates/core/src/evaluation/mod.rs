//! Test-set metrics, the objective/architecture ablation harness and loss-curve reports.

pub mod ablation;
pub mod metrics;

use std::collections::HashSet;
use std::path::Path;

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::network::{Example, Network};
use crate::plots::{line_panels, Panel};
use crate::training::{predict_all, HistoryRow};

pub use ablation::{run_ablation, write_ablation, AblationData, AblationResult, AblationRow, AblationSpec, Spread};
pub use metrics::{Confusion, Metrics};

/// Errors unless no test id occurs among `train_ids`.
pub fn check_disjoint<'a>(test: &[Example], train_ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let train: HashSet<&str> = train_ids.into_iter().collect();
    let overlap: Vec<&str> = test.iter().map(|e| e.tweet_id.as_str()).filter(|id| train.contains(id)).collect();
    if overlap.is_empty() {
        Ok(())
    } else {
        Err(Error::Invalid(format!("{} test ids also appear in training, e.g. {}", overlap.len(), overlap[0])))
    }
}

/// Eval-mode metrics on `test` after asserting it shares no id with training.
pub fn evaluate<'a>(net: &Network<f64>, test: &[Example], train_ids: impl IntoIterator<Item = &'a str>) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::Empty("test set"));
    }
    check_disjoint(test, train_ids)?;
    let truth: Vec<Label> = test
        .iter()
        .map(|e| e.label.ok_or_else(|| Error::Invalid(format!("test example {} has no label", e.tweet_id))))
        .collect::<Result<_>>()?;
    let predicted: Vec<Label> = predict_all(net, test)?.iter().map(|p| p.label).collect();
    Metrics::from_labels(&truth, &predicted)
}

pub const LOSS_PANELS: [&str; 4] = ["l_ml", "l_at", "l_vat", "l_mix"];

fn term(row: &HistoryRow, name: &str) -> f64 {
    match name {
        "l_ml" => row.l_ml,
        "l_at" => row.l_at,
        "l_vat" => row.l_vat,
        _ => row.l_mix,
    }
}

/// One panel per loss term plus the net objective, one line per named run.
/// Returns the number of panels drawn.
pub fn plot_loss_curves(histories: &[(String, Vec<HistoryRow>)], path: &Path) -> Result<usize> {
    let panels: Vec<Panel> = LOSS_PANELS
        .iter()
        .map(|&name| Panel {
            title: name.to_string(),
            lines: histories.iter().map(|(run, rows)| (run.clone(), rows.iter().map(|r| (r.step as f64, term(r, name))).collect())).collect(),
        })
        .collect();
    line_panels(path, &panels)?;
    Ok(panels.len())
}

/// Variance of consecutive differences of the supervised loss over the last
/// `window` steps; lower means a smoother curve.
pub fn ml_delta_variance(history: &[HistoryRow], window: usize) -> Option<f64> {
    let tail = &history[history.len().saturating_sub(window + 1)..];
    let deltas: Vec<f64> = tail.windows(2).map(|w| w[1].l_ml - w[0].l_ml).collect();
    if deltas.len() < 2 {
        return None;
    }
    let mean = deltas.iter().sum::<f64>() / deltas.len() as f64;
    Some(deltas.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (deltas.len() - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{FeatureLayout, NetworkConfig};

    fn row(step: usize, l_ml: f64) -> HistoryRow {
        HistoryRow {
            step,
            l_ml,
            l_at: 0.0,
            l_vat: 0.0,
            l_mix: l_ml,
            grad_norm: 0.0,
            clipped_norm: 0.0,
            learning_rate: 1e-3,
            val_accuracy: None,
            val_f1: None,
        }
    }

    fn net() -> Network<f64> {
        let cfg = NetworkConfig {
            vocab_size: 8,
            embed_dim: 2,
            hidden: 2,
            tweet_features: 2,
            user_features: 1,
            ek_dim: 1,
            ek_width: 1,
            layout: FeatureLayout::Joined { widths: vec![2] },
            attention: true,
            head_width: 2,
            dropout: 0.0,
            freeze_embeddings: false,
        };
        Network::new(cfg, 0).unwrap()
    }

    fn ex(id: &str, label: Label) -> Example {
        Example { tweet_id: id.into(), ids: vec![2, 3], tweet: vec![0.1, 0.2], user: vec![0.3], ek: vec![0.0], label: Some(label) }
    }

    #[test]
    fn overlapping_ids_rejected() {
        let n = net();
        let test = vec![ex("a", Label::Fake), ex("b", Label::Genuine)];
        assert!(evaluate(&n, &test, ["c", "d"]).is_ok());
        assert!(matches!(evaluate(&n, &test, ["b"]), Err(Error::Invalid(_))));
        assert!(matches!(evaluate(&n, &[], ["b"]), Err(Error::Empty(_))));
    }

    #[test]
    fn evaluate_is_pure() {
        let n = net();
        let test = vec![ex("a", Label::Fake), ex("b", Label::Genuine), ex("c", Label::Genuine)];
        assert_eq!(evaluate(&n, &test, []).unwrap(), evaluate(&n, &test, []).unwrap());
    }

    #[test]
    fn loss_panels_count_terms_plus_net() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.svg");
        assert_eq!(plot_loss_curves(&[], &empty).unwrap(), 4);
        assert!(std::fs::read_to_string(&empty).unwrap().contains("<svg"));
        let runs = vec![("ML".to_string(), (1..20).map(|s| row(s, 1.0 / s as f64)).collect())];
        assert_eq!(plot_loss_curves(&runs, &dir.path().join("curves.svg")).unwrap(), 4);
    }

    #[test]
    fn delta_variance() {
        let flat: Vec<HistoryRow> = (0..60).map(|s| row(s, 1.0 - 0.01 * s as f64)).collect();
        assert!(ml_delta_variance(&flat, 50).unwrap() < 1e-20);
        let jagged: Vec<HistoryRow> = (0..60).map(|s| row(s, if s % 2 == 0 { 1.0 } else { 0.5 })).collect();
        assert!(ml_delta_variance(&jagged, 50).unwrap() > 0.2);
        assert!(ml_delta_variance(&flat[..2], 50).is_none());
    }
}
