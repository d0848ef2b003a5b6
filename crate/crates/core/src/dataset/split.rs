use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::records::{DatasetSplit, Label, LabelSource, TweetRecord};
use crate::error::{Error, Result};

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;

/// Draws the test set from human-verified records only, with the fake share
/// of the whole labelled pool. Remaining labelled records (human and
/// machine) form the train set; unlabelled records pass through. Order within
/// each part follows the input order.
pub fn split_train_test(records: &[TweetRecord], test_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Invalid(format!("test fraction {test_fraction} outside (0, 1)")));
    }
    let labelled: Vec<usize> = (0..records.len()).filter(|&i| records[i].is_labelled()).collect();
    let human: Vec<usize> = labelled
        .iter()
        .copied()
        .filter(|&i| records[i].label_source == Some(LabelSource::Human))
        .collect();
    if labelled.is_empty() {
        return Err(Error::Empty("no labelled records to split"));
    }

    let n_test = (test_fraction * human.len() as f64).round() as usize;
    if n_test == 0 {
        return Err(Error::InsufficientHuman {
            required: (1.0 / test_fraction).ceil() as usize,
            available: human.len(),
            detail: "test set would be empty".into(),
        });
    }
    let fake_total = labelled.iter().filter(|&&i| records[i].label == Some(Label::Fake)).count();
    let fake_share = fake_total as f64 / labelled.len() as f64;
    let want_fake = (n_test as f64 * fake_share).round() as usize;
    let want_genuine = n_test - want_fake;

    let mut human_fake: Vec<usize> = human.iter().copied().filter(|&i| records[i].label == Some(Label::Fake)).collect();
    let mut human_genuine: Vec<usize> = human.iter().copied().filter(|&i| records[i].label == Some(Label::Genuine)).collect();
    if human_fake.len() < want_fake || human_genuine.len() < want_genuine {
        return Err(Error::InsufficientHuman {
            required: n_test,
            available: human.len(),
            detail: format!(
                "{want_fake} fake + {want_genuine} genuine, have {} fake + {} genuine",
                human_fake.len(),
                human_genuine.len()
            ),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    human_fake.shuffle(&mut rng);
    human_genuine.shuffle(&mut rng);
    let mut test_idx: Vec<usize> = human_fake[..want_fake].iter().chain(&human_genuine[..want_genuine]).copied().collect();
    test_idx.sort_unstable();

    let mut in_test = vec![false; records.len()];
    for &i in &test_idx {
        in_test[i] = true;
    }
    let test = test_idx.iter().map(|&i| records[i].clone()).collect();
    let train = labelled.iter().filter(|&&i| !in_test[i]).map(|&i| records[i].clone()).collect();
    let unlabelled = records.iter().filter(|r| !r.is_labelled()).cloned().collect();
    Ok(DatasetSplit { train, test, unlabelled })
}

pub fn fake_share(records: &[TweetRecord]) -> f64 {
    let labelled: Vec<_> = records.iter().filter_map(|r| r.label).collect();
    if labelled.is_empty() {
        return 0.0;
    }
    labelled.iter().filter(|&&l| l == Label::Fake).count() as f64 / labelled.len() as f64
}
