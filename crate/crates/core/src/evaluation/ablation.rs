use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{evaluate, Metrics};
use crate::error::{Error, Result};
use crate::network::{Example, Network, NetworkConfig};
use crate::training::{train, HistoryRow, TrainingConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub name: String,
    pub training: TrainingConfig,
    pub network: NetworkConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationSpec {
    pub rows: Vec<AblationRow>,
    pub seeds: Vec<u64>,
}

impl AblationSpec {
    /// Loss-term rows over a fixed architecture.
    pub fn objectives(training: &TrainingConfig, network: &NetworkConfig, seeds: Vec<u64>) -> Self {
        let rows = training
            .objective_rows()
            .into_iter()
            .map(|(name, training)| AblationRow { name, training, network: network.clone() })
            .collect();
        Self { rows, seeds }
    }

    /// Architecture rows under a fixed objective.
    pub fn architectures(training: &TrainingConfig, network: &NetworkConfig, seeds: Vec<u64>) -> Self {
        let rows = NetworkConfig::ablation_rows(network)
            .into_iter()
            .map(|(name, network)| AblationRow { name, training: training.clone(), network })
            .collect();
        Self { rows, seeds }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows.is_empty() || self.seeds.is_empty() {
            return Err(Error::Empty("ablation rows or seeds"));
        }
        let mut names = HashSet::new();
        for (i, r) in self.rows.iter().enumerate() {
            if !names.insert(r.name.as_str()) {
                return Err(Error::Invalid(format!("duplicate ablation row name {:?}", r.name)));
            }
            if self.rows[..i].iter().any(|o| o.training == r.training && o.network == r.network) {
                return Err(Error::Invalid(format!("ablation row {:?} repeats an earlier configuration", r.name)));
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_str(&text)?;
        spec.validate()?;
        Ok(spec)
    }
}

pub struct AblationData<'a> {
    pub train: &'a [Example],
    pub unlabelled: &'a [Example],
    pub test: &'a [Example],
}

/// Median, mean and sample standard deviation over seeds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub median: f64,
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { median: f64::NAN, mean: f64::NAN, std: f64::NAN };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        let median = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 };
        let mean = v.iter().sum::<f64>() / n as f64;
        let std = if n > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt() } else { 0.0 };
        Self { median, mean, std }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AblationResult {
    pub name: String,
    pub seeds: Vec<u64>,
    pub runs: Vec<Metrics>,
    pub accuracy: Spread,
    pub precision: Spread,
    pub recall: Spread,
    pub f1: Spread,
    pub macro_f1: Spread,
    /// Set when any seed of this row failed; the row then carries no metrics.
    pub error: Option<String>,
    #[serde(skip)]
    pub histories: Vec<Vec<HistoryRow>>,
}

fn run_row(row: &AblationRow, seeds: &[u64], data: &AblationData<'_>) -> Result<(Vec<Metrics>, Vec<Vec<HistoryRow>>)> {
    let mut runs = Vec::new();
    let mut histories = Vec::new();
    for &seed in seeds {
        let net = Network::new(row.network.clone(), seed)?;
        let cfg = TrainingConfig { seed, ..row.training.clone() };
        let out = train(net, data.train, data.unlabelled, &cfg)?;
        runs.push(evaluate(&out.network, data.test, data.train.iter().map(|e| e.tweet_id.as_str()))?);
        histories.push(out.history);
    }
    Ok((runs, histories))
}

/// Trains and evaluates every row for every seed. A failing row is recorded
/// with its error and the sweep continues.
pub fn run_ablation(spec: &AblationSpec, data: &AblationData<'_>) -> Result<Vec<AblationResult>> {
    spec.validate()?;
    let mut out = Vec::with_capacity(spec.rows.len());
    for row in &spec.rows {
        log::info!("ablation row {}", row.name);
        let (runs, histories, error) = match run_row(row, &spec.seeds, data) {
            Ok((r, h)) => (r, h, None),
            Err(e) => {
                log::warn!("ablation row {} failed: {e}", row.name);
                (Vec::new(), Vec::new(), Some(e.to_string()))
            }
        };
        let spread = |f: fn(&Metrics) -> f64| Spread::of(&runs.iter().map(f).collect::<Vec<_>>());
        out.push(AblationResult {
            name: row.name.clone(),
            seeds: spec.seeds.clone(),
            accuracy: spread(|m| m.accuracy),
            precision: spread(|m| m.precision),
            recall: spread(|m| m.recall),
            f1: spread(|m| m.f1),
            macro_f1: spread(|m| m.macro_f1),
            runs,
            error,
            histories,
        });
    }
    Ok(out)
}

/// `ablation.json` (full results), `ablation.csv` (one line per row) and
/// `ablation.md` (rendered table).
pub fn write_ablation(results: &[AblationResult], dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("ablation.json");
    std::fs::write(&json, serde_json::to_string_pretty(results)?).map_err(|e| Error::io(&json, e))?;

    let mut w = csv::Writer::from_path(dir.join("ablation.csv"))?;
    w.write_record(["row", "accuracy_median", "accuracy_std", "precision_median", "recall_median", "f1_median", "macro_f1_median", "error"])?;
    let mut md = String::from("| row | accuracy | precision | recall | F1 | macro F1 |\n|---|---|---|---|---|---|\n");
    for r in results {
        let cells = [r.accuracy.median, r.accuracy.std, r.precision.median, r.recall.median, r.f1.median, r.macro_f1.median].map(|v| format!("{v:.4}"));
        let mut rec = vec![r.name.clone()];
        rec.extend(cells.iter().cloned());
        rec.push(r.error.clone().unwrap_or_default());
        w.write_record(&rec)?;
        match &r.error {
            Some(e) => writeln!(md, "| {} | failed: {e} | | | | |", r.name),
            None => writeln!(
                md,
                "| {} | {:.3} ± {:.3} | {:.3} | {:.3} | {:.3} | {:.3} |",
                r.name, r.accuracy.median, r.accuracy.std, r.precision.median, r.recall.median, r.f1.median, r.macro_f1.median
            ),
        }
        .expect("writing to a String");
    }
    w.flush().map_err(|e| Error::io(dir, e))?;
    let mdp = dir.join("ablation.md");
    std::fs::write(&mdp, md).map_err(|e| Error::io(&mdp, e))
}
