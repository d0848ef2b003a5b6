//! Fixed-tagset part-of-speech and surface-entity counts.
//!
//! Tagging is rule based: closed-class word lists first, then suffix rules,
//! then capitalisation (proper noun), defaulting to noun. The tagset is part
//! of the feature schema and must not be reordered.

use crate::text::{scan, TokenKind};

pub const POS_TAGS: [&str; 11] = ["noun", "propn", "verb", "adj", "adv", "pron", "det", "adp", "conj", "num", "intj"];

pub const ENTITY_KINDS: [&str; 6] = ["exclamation", "question", "all_caps", "symbol", "numeral", "elongated"];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pos {
    Noun = 0,
    Propn,
    Verb,
    Adj,
    Adv,
    Pron,
    Det,
    Adp,
    Conj,
    Num,
    Intj,
}

const PRONOUNS: &[&str] = &[
    "i", "me", "my", "mine", "you", "your", "yours", "he", "him", "his", "she", "her", "hers", "it", "its", "we", "us",
    "our", "ours", "they", "them", "their", "theirs", "myself", "yourself", "himself", "herself", "itself", "ourselves",
    "themselves", "who", "whom", "whose", "someone", "everyone", "anyone", "nobody", "everybody", "something",
    "everything", "nothing",
];
const DETERMINERS: &[&str] = &[
    "a", "an", "the", "this", "that", "these", "those", "each", "every", "some", "any", "no", "all", "both", "either",
    "neither", "many", "much", "few", "several", "such", "which", "what",
];
const ADPOSITIONS: &[&str] = &[
    "in", "on", "at", "by", "for", "with", "about", "against", "between", "into", "through", "during", "before",
    "after", "above", "below", "to", "from", "up", "down", "of", "off", "over", "under", "via", "without", "within",
    "across", "amid", "among", "around", "near",
];
const CONJUNCTIONS: &[&str] = &["and", "or", "but", "nor", "so", "yet", "because", "although", "though", "while", "if", "unless", "whereas", "since"];
const INTERJECTIONS: &[&str] = &["oh", "wow", "lol", "omg", "hey", "yes", "yeah", "ok", "okay", "ugh", "wtf", "haha", "please", "alas"];
const VERBS: &[&str] = &[
    "is", "am", "are", "was", "were", "be", "been", "being", "have", "has", "had", "do", "does", "did", "will",
    "would", "shall", "should", "can", "could", "may", "might", "must", "say", "says", "said", "get", "got", "make",
    "made", "go", "goes", "went", "know", "think", "see", "take", "come", "want", "use", "find", "give", "tell",
    "cause", "causes", "spread", "spreads", "stay", "wash", "wear", "cure", "cures", "kill", "kills", "prevent",
    "prevents", "stop", "test", "protect",
];
const NUMBER_WORDS: &[&str] = &["one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "hundred", "thousand", "million", "billion"];

fn tag_word(word: &str, sentence_initial: bool) -> Pos {
    let lw = word.to_lowercase();
    let lw = lw.as_str();
    if PRONOUNS.contains(&lw) {
        return Pos::Pron;
    }
    if DETERMINERS.contains(&lw) {
        return Pos::Det;
    }
    if ADPOSITIONS.contains(&lw) {
        return Pos::Adp;
    }
    if CONJUNCTIONS.contains(&lw) {
        return Pos::Conj;
    }
    if INTERJECTIONS.contains(&lw) {
        return Pos::Intj;
    }
    if VERBS.contains(&lw) || lw.ends_with("n't") {
        return Pos::Verb;
    }
    if NUMBER_WORDS.contains(&lw) || lw.chars().next().is_some_and(|c| c.is_ascii_digit()) {
        return Pos::Num;
    }
    let long = lw.chars().count() > 4;
    if long && lw.ends_with("ly") {
        return Pos::Adv;
    }
    if long && ["ing", "ed", "ize", "ise", "ate", "ify"].iter().any(|s| lw.ends_with(s)) {
        return Pos::Verb;
    }
    if long && ["ous", "ful", "ive", "able", "ible", "al", "ic", "less", "ish", "est"].iter().any(|s| lw.ends_with(s)) {
        return Pos::Adj;
    }
    if !sentence_initial && word.chars().next().is_some_and(char::is_uppercase) {
        return Pos::Propn;
    }
    Pos::Noun
}

/// Counts per [`POS_TAGS`] slot.
pub fn pos_counts(text: &str) -> [f64; 11] {
    let mut counts = [0.0; 11];
    let mut sentence_initial = true;
    for tok in scan(text) {
        match tok.kind {
            TokenKind::Word => {
                counts[tag_word(&tok.text, sentence_initial) as usize] += 1.0;
                sentence_initial = false;
            }
            TokenKind::Number => {
                counts[Pos::Num as usize] += 1.0;
                sentence_initial = false;
            }
            TokenKind::Punct if matches!(tok.text.as_str(), "." | "!" | "?") => sentence_initial = true,
            _ => {}
        }
    }
    counts
}

fn is_elongated(word: &str) -> bool {
    let chars: Vec<char> = word.to_lowercase().chars().collect();
    chars.windows(3).any(|w| w[0] == w[1] && w[1] == w[2] && w[0].is_alphabetic())
}

/// Counts per [`ENTITY_KINDS`] slot.
pub fn entity_counts(text: &str) -> [f64; 6] {
    let mut counts = [0.0; 6];
    for tok in scan(text) {
        match tok.kind {
            TokenKind::Punct if tok.text == "!" => counts[0] += 1.0,
            TokenKind::Punct if tok.text == "?" => counts[1] += 1.0,
            TokenKind::Symbol => counts[3] += 1.0,
            TokenKind::Number => counts[4] += 1.0,
            TokenKind::Word => {
                let letters: Vec<char> = tok.text.chars().filter(|c| c.is_alphabetic()).collect();
                if letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase()) {
                    counts[2] += 1.0;
                }
                if is_elongated(&tok.text) {
                    counts[5] += 1.0;
                }
            }
            _ => {}
        }
    }
    counts
}
