//! Lexicon-average polarity on [-1, 1].

use std::collections::HashMap;
use std::sync::OnceLock;

use crate::text;

const POSITIVE: &[(&str, f64)] = &[
    ("good", 0.7), ("great", 0.8), ("excellent", 1.0), ("best", 1.0), ("better", 0.5), ("safe", 0.5),
    ("safer", 0.5), ("effective", 0.6), ("recover", 0.5), ("recovered", 0.5), ("recovery", 0.5),
    ("hope", 0.5), ("hopeful", 0.6), ("thank", 0.6), ("thanks", 0.6), ("grateful", 0.8), ("love", 0.8),
    ("happy", 0.8), ("glad", 0.6), ("protect", 0.4), ("protected", 0.4), ("healthy", 0.6), ("help", 0.3),
    ("helpful", 0.5), ("support", 0.4), ("together", 0.4), ("strong", 0.5), ("win", 0.6), ("positive", 0.4),
    ("proven", 0.4), ("trust", 0.5), ("care", 0.4), ("kind", 0.6), ("calm", 0.4), ("improve", 0.5),
    ("improving", 0.5), ("success", 0.8), ("successful", 0.8), ("wonderful", 1.0), ("amazing", 0.9),
    ("brave", 0.6), ("heroes", 0.7), ("cure", 0.4), ("cured", 0.4), ("stayhome", 0.3), ("staysafe", 0.5),
];

const NEGATIVE: &[(&str, f64)] = &[
    ("bad", -0.7), ("worse", -0.7), ("worst", -1.0), ("terrible", -1.0), ("awful", -1.0), ("dangerous", -0.7),
    ("danger", -0.6), ("death", -0.8), ("deaths", -0.8), ("dead", -0.8), ("die", -0.8), ("dying", -0.8),
    ("kill", -0.9), ("kills", -0.9), ("killed", -0.9), ("fear", -0.7), ("scared", -0.7), ("panic", -0.7),
    ("crisis", -0.6), ("lie", -0.7), ("lies", -0.7), ("liar", -0.8), ("fake", -0.6), ("hoax", -0.7),
    ("fraud", -0.8), ("scam", -0.8), ("sick", -0.6), ("ill", -0.5), ("infected", -0.5), ("poison", -0.9),
    ("toxic", -0.8), ("harm", -0.6), ("harmful", -0.7), ("hate", -0.9), ("angry", -0.7), ("sad", -0.6),
    ("wrong", -0.5), ("fail", -0.6), ("failed", -0.6), ("failure", -0.7), ("threat", -0.6), ("conspiracy", -0.5),
    ("bioweapon", -0.8), ("outbreak", -0.4), ("shortage", -0.5), ("lockdown", -0.3), ("risk", -0.3),
];

const NEGATORS: &[&str] = &["not", "no", "never", "nothing", "neither", "nor", "cannot"];

/// Word → polarity table; unmatched words do not count towards the average.
#[derive(Clone, Debug)]
pub struct Lexicon {
    scores: HashMap<String, f64>,
}

impl Lexicon {
    pub fn from_pairs<I, S>(pairs: I) -> Self
    where
        I: IntoIterator<Item = (S, f64)>,
        S: Into<String>,
    {
        Self { scores: pairs.into_iter().map(|(w, s)| (w.into(), s.clamp(-1.0, 1.0))).collect() }
    }

    pub fn english() -> &'static Lexicon {
        static LEXICON: OnceLock<Lexicon> = OnceLock::new();
        LEXICON.get_or_init(|| Lexicon::from_pairs(POSITIVE.iter().chain(NEGATIVE).map(|&(w, s)| (w, s))))
    }

    /// Mean polarity of lexicon words; a negator within the two preceding
    /// words flips the sign. Empty or lexicon-free text scores 0.
    pub fn polarity(&self, text_in: &str) -> f64 {
        let words = text::words(text_in);
        let mut total = 0.0;
        let mut matched = 0usize;
        for (i, w) in words.iter().enumerate() {
            let Some(&score) = self.scores.get(w.as_str()) else { continue };
            let negated = words[i.saturating_sub(2)..i]
                .iter()
                .any(|p| NEGATORS.contains(&p.as_str()) || p.ends_with("n't"));
            total += if negated { -score } else { score };
            matched += 1;
        }
        if matched == 0 {
            0.0
        } else {
            (total / matched as f64).clamp(-1.0, 1.0)
        }
    }
}

pub fn sentiment(text: &str) -> f64 {
    Lexicon::english().polarity(text)
}

/// Histogram bin on the -2..=2 display axis used in reports.
pub fn display_bin(polarity: f64) -> i32 {
    (polarity * 2.0).round().clamp(-2.0, 2.0) as i32
}
