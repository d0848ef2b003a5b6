//! Natural-language-inference interface used by the weak-labelling stage.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::text;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NliOutcome {
    Entail,
    Neutral,
    Contradict,
}

pub trait NliModel: Send + Sync {
    fn infer(&self, premise: &str, hypothesis: &str) -> Result<NliOutcome>;
}

const NEGATORS: &[&str] = &["no", "not", "never", "none", "nothing", "cannot", "can't", "don't", "doesn't", "isn't", "aren't", "won't", "wasn't", "didn't", "false", "myth", "hoax", "fake"];

/// Lexical-overlap inference: the hypothesis must be mostly covered by the
/// premise's content words; matching negation parity entails, differing
/// parity contradicts, anything else is neutral.
#[derive(Clone, Debug)]
pub struct LexicalNli {
    pub min_coverage: f64,
}

impl Default for LexicalNli {
    fn default() -> Self {
        Self { min_coverage: 0.6 }
    }
}

fn content_and_negations(s: &str) -> (HashSet<String>, usize) {
    let mut content = HashSet::new();
    let mut negations = 0;
    for w in text::words(s) {
        if NEGATORS.contains(&w.as_str()) || w.ends_with("n't") {
            negations += 1;
        } else if !text::is_stopword(&w) {
            content.insert(w);
        }
    }
    (content, negations)
}

impl NliModel for LexicalNli {
    fn infer(&self, premise: &str, hypothesis: &str) -> Result<NliOutcome> {
        let (p, pneg) = content_and_negations(premise);
        let (h, hneg) = content_and_negations(hypothesis);
        if h.is_empty() {
            return Ok(NliOutcome::Neutral);
        }
        let covered = h.iter().filter(|w| p.contains(*w)).count() as f64 / h.len() as f64;
        if covered < self.min_coverage {
            return Ok(NliOutcome::Neutral);
        }
        Ok(if pneg % 2 == hneg % 2 { NliOutcome::Entail } else { NliOutcome::Contradict })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lexical_nli_outcomes() {
        let nli = LexicalNli::default();
        let s = "5G towers spread the coronavirus";
        assert_eq!(nli.infer("5G towers spread coronavirus, wake up", s).unwrap(), NliOutcome::Entail);
        assert_eq!(nli.infer("5G towers do not spread coronavirus", s).unwrap(), NliOutcome::Contradict);
        assert_eq!(nli.infer("wash your hands often", s).unwrap(), NliOutcome::Neutral);
    }
}
