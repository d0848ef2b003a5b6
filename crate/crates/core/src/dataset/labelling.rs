//! Weak-labelling stages. Each stage only touches unlabelled records, so
//! running the stages in priority order (url → org account → similarity →
//! nli) never overwrites an earlier decision, and re-running a stage on its
//! own output is a no-op.

use std::collections::{BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use url::Url;

use super::records::{Label, LabelSource, SupportStatement, TweetRecord};
use crate::embedding::{similarity_matrix, SentenceEmbedder};
use crate::error::{Error, Result};
use crate::nli::{NliModel, NliOutcome};

pub const DEFAULT_SIMILARITY_THRESHOLD: f64 = 0.9;

const TRACKING_PARAMS: &[&str] = &["fbclid", "gclid", "igshid", "mc_cid", "mc_eid", "ref", "ref_src", "ref_url", "s", "si", "t"];

/// Canonical URL form used as the verdict-table key: lowercase scheme and
/// host, no fragment, no tracking query parameters. Unparseable input yields
/// `None`.
pub fn normalize_url(raw: &str) -> Option<String> {
    let raw = raw.trim();
    let with_scheme = if raw.to_ascii_lowercase().starts_with("www.") { format!("http://{raw}") } else { raw.to_string() };
    let mut url = Url::parse(&with_scheme).ok()?;
    url.host_str()?;
    url.set_fragment(None);
    let kept: Vec<(String, String)> = url
        .query_pairs()
        .filter(|(k, _)| {
            let k = k.to_ascii_lowercase();
            !k.starts_with("utm_") && !TRACKING_PARAMS.contains(&k.as_str())
        })
        .map(|(k, v)| (k.into_owned(), v.into_owned()))
        .collect();
    if kept.is_empty() {
        url.set_query(None);
    } else {
        url.query_pairs_mut().clear().extend_pairs(kept);
    }
    Some(url.to_string())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LabelReport {
    pub labelled: usize,
    /// Tweets left unlabelled because their evidence disagreed.
    pub conflicts: Vec<String>,
    /// Tweets that could not be processed, with the reason.
    pub skipped: Vec<(String, String)>,
}

#[derive(Clone, Debug)]
pub struct Labelled {
    pub tweets: Vec<TweetRecord>,
    pub report: LabelReport,
}

fn assign(t: &mut TweetRecord, label: Label, source: LabelSource, report: &mut LabelReport) {
    t.label = Some(label);
    t.label_source = Some(source);
    report.labelled += 1;
}

/// Propagates URL verdicts to the tweets sharing them.
pub fn label_by_url_propagation(tweets: &[TweetRecord], url_verdicts: &HashMap<String, Label>) -> Labelled {
    let verdicts: HashMap<String, Label> = url_verdicts
        .iter()
        .map(|(k, v)| (normalize_url(k).unwrap_or_else(|| k.clone()), *v))
        .collect();
    let mut report = LabelReport::default();
    let tweets = tweets
        .iter()
        .cloned()
        .map(|mut t| {
            if t.is_labelled() {
                return t;
            }
            let found: BTreeSet<Label> = t
                .urls
                .iter()
                .filter_map(|u| normalize_url(u))
                .filter_map(|u| verdicts.get(&u).copied())
                .collect();
            match found.len() {
                0 => {}
                1 => assign(&mut t, *found.iter().next().unwrap(), LabelSource::UrlPropagation, &mut report),
                _ => report.conflicts.push(t.tweet_id.clone()),
            }
            t
        })
        .collect();
    Labelled { tweets, report }
}

/// Tweets posted by official health-organisation accounts are genuine.
pub fn label_by_org_account(tweets: &[TweetRecord], org_user_ids: &HashSet<String>) -> Labelled {
    let mut report = LabelReport::default();
    let tweets = tweets
        .iter()
        .cloned()
        .map(|mut t| {
            if !t.is_labelled() && org_user_ids.contains(&t.user_id) {
                assign(&mut t, Label::Genuine, LabelSource::OrgAccount, &mut report);
            }
            t
        })
        .collect();
    Labelled { tweets, report }
}

/// Each unlabelled tweet inherits the verdict of its most similar statement
/// when the cosine similarity reaches `threshold`. Ties go to the earlier
/// statement.
pub fn label_by_similarity(
    tweets: &[TweetRecord],
    statements: &[SupportStatement],
    embedder: &dyn SentenceEmbedder,
    threshold: f64,
) -> Result<Labelled> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::Invalid(format!("similarity threshold {threshold} outside (0, 1]")));
    }
    let mut report = LabelReport::default();
    let mut stmt_vecs = Vec::new();
    let mut stmt_verdicts = Vec::new();
    for s in statements {
        match embedder.embed(&s.text) {
            Ok(v) => {
                stmt_vecs.push(v);
                stmt_verdicts.push(s.verdict);
            }
            Err(e) => {
                log::warn!("statement {} not embedded: {e}", s.statement_id);
                report.skipped.push((s.statement_id.clone(), e.to_string()));
            }
        }
    }

    let mut out = tweets.to_vec();
    let mut pending = Vec::new();
    let mut tweet_vecs = Vec::new();
    for (i, t) in out.iter().enumerate() {
        if t.is_labelled() {
            continue;
        }
        match embedder.embed(&t.text) {
            Ok(v) => {
                pending.push(i);
                tweet_vecs.push(v);
            }
            Err(e) => {
                log::warn!("tweet {} not embedded: {e}", t.tweet_id);
                report.skipped.push((t.tweet_id.clone(), e.to_string()));
            }
        }
    }
    if stmt_vecs.is_empty() || pending.is_empty() {
        return Ok(Labelled { tweets: out, report });
    }

    let sims = similarity_matrix(&tweet_vecs, &stmt_vecs, embedder.dim());
    for (row, &i) in pending.iter().enumerate() {
        let (best, score) = sims
            .row(row)
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (j, &s)| if s > acc.1 { (j, s) } else { acc });
        if score >= threshold {
            assign(&mut out[i], stmt_verdicts[best], LabelSource::Similarity, &mut report);
        }
    }
    Ok(Labelled { tweets: out, report })
}

/// Maps one (tweet, statement) inference to a vote.
pub fn nli_vote(outcome: NliOutcome, verdict: Label) -> Option<Label> {
    match (outcome, verdict) {
        (NliOutcome::Entail, v) => Some(v),
        (NliOutcome::Contradict, v) => Some(v.opposite()),
        (NliOutcome::Neutral, _) => None,
    }
}

/// Pairs every unlabelled tweet (premise) with every statement (hypothesis).
/// Entailing a statement votes for its verdict, contradicting it votes for
/// the opposite, neutral abstains. Unanimous votes label the tweet; mixed
/// votes leave it unlabelled and flagged.
pub fn label_by_nli(tweets: &[TweetRecord], statements: &[SupportStatement], nli: &dyn NliModel) -> Labelled {
    let mut report = LabelReport::default();
    let tweets = tweets
        .iter()
        .cloned()
        .map(|mut t| {
            if t.is_labelled() {
                return t;
            }
            let mut votes = BTreeSet::new();
            for s in statements {
                match nli.infer(&t.text, &s.text) {
                    Ok(outcome) => votes.extend(nli_vote(outcome, s.verdict)),
                    Err(e) => {
                        log::warn!("nli failed for tweet {}: {e}", t.tweet_id);
                        report.skipped.push((t.tweet_id.clone(), e.to_string()));
                        return t;
                    }
                }
            }
            match votes.len() {
                0 => {}
                1 => assign(&mut t, *votes.iter().next().unwrap(), LabelSource::Nli, &mut report),
                _ => report.conflicts.push(t.tweet_id.clone()),
            }
            t
        })
        .collect();
    Labelled { tweets, report }
}
