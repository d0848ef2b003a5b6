//! External knowledge: web sentences close to a tweet, pooled into `e_EK`.

pub mod cache;
pub mod search;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::embedding::{similarity_matrix, SentenceEmbedder};
use crate::error::Result;
use crate::text::{is_stopword, scan, split_sentences, TokenKind};

pub use cache::EkCache;
pub use search::{Document, HttpSearchClient, OfflineCorpus, SearchClient};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    /// Documents requested from the search client per query.
    pub results_per_query: usize,
    /// Sentences kept per tweet.
    pub k: usize,
    /// Query length cap in tokens.
    pub query_tokens: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { results_per_query: 5, k: 10, query_tokens: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievedSentence {
    pub text: String,
    pub source_url: String,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalKnowledge {
    pub tweet_id: String,
    pub sentences: Vec<RetrievedSentence>,
    pub embedding: Vec<f64>,
}

/// Search query from tweet text: URLs, mentions, punctuation and stopwords
/// removed, hashtags reduced to their word, capped at `budget` tokens.
pub fn shorten_query(text: &str, budget: usize) -> String {
    scan(text)
        .into_iter()
        .filter_map(|t| match t.kind {
            TokenKind::Word | TokenKind::Number => Some(t.text.to_lowercase()),
            TokenKind::Hashtag => Some(t.text[1..].to_lowercase()),
            _ => None,
        })
        .filter(|w| !is_stopword(w))
        .take(budget)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Scores that agree to 1e-9 rank as ties, so rounding noise from the
/// similarity route cannot reorder equally relevant sentences.
fn tie_key(score: f64) -> f64 {
    (score * 1e9).round()
}

struct Candidate {
    text: String,
    url: String,
    vector: Vec<f64>,
}

fn candidates(documents: &[Document], embedder: &dyn SentenceEmbedder) -> Vec<Candidate> {
    let mut seen = std::collections::HashSet::new();
    let mut out = Vec::new();
    for doc in documents {
        for s in split_sentences(&doc.text) {
            if !seen.insert(s.clone()) {
                continue;
            }
            match embedder.embed(&s) {
                Ok(vector) => out.push(Candidate { text: s, url: doc.url.clone(), vector }),
                Err(e) => log::debug!("skipping sentence from {}: {e}", doc.url),
            }
        }
    }
    out
}

/// Top-`k` sentences by cosine similarity to the tweet, over the sentences
/// of `documents` (given in relevance order). Equal scores keep document
/// order, then sentence order. Repeated sentences count once.
pub fn select_sentences(tweet_text: &str, documents: &[Document], k: usize, embedder: &dyn SentenceEmbedder) -> Result<Vec<RetrievedSentence>> {
    Ok(select_with_vectors(tweet_text, documents, k, embedder)?.into_iter().map(|(s, _)| s).collect())
}

fn select_with_vectors(
    tweet_text: &str,
    documents: &[Document],
    k: usize,
    embedder: &dyn SentenceEmbedder,
) -> Result<Vec<(RetrievedSentence, Vec<f64>)>> {
    let query = embedder.embed(tweet_text)?;
    let cands = candidates(documents, embedder);
    if cands.is_empty() || k == 0 {
        return Ok(Vec::new());
    }
    let vectors: Vec<Vec<f64>> = cands.iter().map(|c| c.vector.clone()).collect();
    let sims = similarity_matrix(&[query], &vectors, embedder.dim());
    let mut order: Vec<usize> = (0..cands.len()).collect();
    let key = |i: usize| tie_key(sims[[0, i]]);
    order.sort_by(|&a, &b| key(b).partial_cmp(&key(a)).unwrap_or(Ordering::Equal).then(a.cmp(&b)));
    let mut cands: Vec<Option<Candidate>> = cands.into_iter().map(Some).collect();
    Ok(order
        .into_iter()
        .take(k)
        .map(|i| {
            let c = cands[i].take().expect("each index taken once");
            (RetrievedSentence { text: c.text, source_url: c.url, score: sims[[0, i]] }, c.vector)
        })
        .collect())
}

pub fn mean_pool(vectors: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    if vectors.is_empty() {
        return out;
    }
    for v in vectors {
        for (o, x) in out.iter_mut().zip(v) {
            *o += x;
        }
    }
    let n = vectors.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    out
}

/// Mean of the sentence embeddings; the zero vector when there are none.
pub fn embed_external_knowledge(sentences: &[String], embedder: &dyn SentenceEmbedder) -> Result<Vec<f64>> {
    let vectors = sentences.iter().map(|s| embedder.embed(s)).collect::<Result<Vec<_>>>()?;
    Ok(mean_pool(&vectors, embedder.dim()))
}

/// Query, search, select and pool for one tweet. A tweet that cannot be
/// embedded or finds nothing gets an empty sentence list and a zero vector.
pub fn retrieve(
    tweet_id: &str,
    text: &str,
    client: &dyn SearchClient,
    embedder: &dyn SentenceEmbedder,
    config: &RetrievalConfig,
) -> Result<ExternalKnowledge> {
    let mut query = shorten_query(text, config.query_tokens);
    if query.is_empty() {
        query = text.to_string();
    }
    let documents = client.search(&query, config.results_per_query)?;
    let selected = match select_with_vectors(text, &documents, config.k, embedder) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("tweet {tweet_id}: {e}");
            Vec::new()
        }
    };
    let vectors: Vec<Vec<f64>> = selected.iter().map(|(_, v)| v.clone()).collect();
    Ok(ExternalKnowledge {
        tweet_id: tweet_id.to_string(),
        embedding: mean_pool(&vectors, embedder.dim()),
        sentences: selected.into_iter().map(|(s, _)| s).collect(),
    })
}

/// Cache-first [`retrieve`].
pub fn retrieve_cached(
    cache: &EkCache,
    tweet_id: &str,
    text: &str,
    client: &dyn SearchClient,
    embedder: &dyn SentenceEmbedder,
    config: &RetrievalConfig,
) -> Result<ExternalKnowledge> {
    if let Some(ek) = cache.get(tweet_id) {
        return Ok(ek);
    }
    let ek = retrieve(tweet_id, text, client, embedder, config)?;
    cache.put(&ek)?;
    Ok(ek)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::testing::TableEmbedder;
    use crate::embedding::{cosine, HashingEmbedder};
    use std::collections::HashMap;

    #[test]
    fn query_of_only_a_url_is_empty() {
        assert_eq!(shorten_query("https://t.co/abc", 16), "");
    }

    #[test]
    fn query_drops_urls_mentions_stopwords() {
        assert_eq!(
            shorten_query("COVID vaccine causes infertility http://x.co @user", 16),
            "covid vaccine causes infertility"
        );
        assert_eq!(shorten_query("this is the #Truth about it", 16), "truth");
        assert_eq!(shorten_query("the and of to", 16), "");
        assert_eq!(shorten_query("one two three four", 2), "one two");
    }

    fn docs() -> Vec<Document> {
        let topics = ["vaccines", "masks", "bleach", "5g towers", "hydroxychloroquine", "lockdowns"];
        (0..6)
            .map(|d| Document {
                url: format!("https://site{d}.example/page"),
                text: (0..5)
                    .map(|s| format!("Claim {s} about {} spreading in region {}.", topics[(d + s) % 6], d * 7 + s))
                    .collect::<Vec<_>>()
                    .join(" "),
            })
            .collect()
    }

    #[test]
    fn verbatim_sentence_ranks_first() {
        let e = HashingEmbedder::default();
        let tweet = "Drinking bleach cures the coronavirus.";
        let documents = vec![
            Document { url: "a".into(), text: "Masks reduce spread. Wash your hands often.".into() },
            Document { url: "b".into(), text: format!("Officials responded. {tweet} This is false.") },
        ];
        let got = select_sentences(tweet, &documents, 10, &e).unwrap();
        assert_eq!(got[0].text, tweet);
        assert!((got[0].score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn matches_exhaustive_cosine_ranking() {
        let e = HashingEmbedder::default();
        let documents = docs();
        let tweet = "bleach spreading in region 15";
        let got = select_sentences(tweet, &documents, 10, &e).unwrap();

        // oracle: every sentence scored independently with the plain cosine
        let q = e.embed(tweet).unwrap();
        let mut all: Vec<(f64, usize, String)> = Vec::new();
        for d in &documents {
            for s in split_sentences(&d.text) {
                let score = cosine(&q, &e.embed(&s).unwrap());
                all.push((score, all.len(), s));
            }
        }
        assert_eq!(all.len(), 30);
        let tie = |x: f64| (x * 1e9).round();
        all.sort_by(|a, b| tie(b.0).partial_cmp(&tie(a.0)).unwrap().then(a.1.cmp(&b.1)));
        let want: Vec<&str> = all.iter().take(10).map(|x| x.2.as_str()).collect();
        let have: Vec<&str> = got.iter().map(|s| s.text.as_str()).collect();
        assert_eq!(have, want);
        for (g, w) in got.iter().zip(&all) {
            assert!((g.score - w.0).abs() < 1e-12);
        }
        assert!(got.windows(2).all(|w| w[0].score >= w[1].score - 1e-9));
    }

    proptest::proptest! {
        #[test]
        fn selection_is_ranked_bounded_and_pooled(
            words in proptest::collection::vec(proptest::collection::vec(0usize..12, 1..6), 0..20),
            k in 0usize..8,
        ) {
            const VOCAB: [&str; 12] = ["bleach", "vaccine", "masks", "towers", "region", "spreading", "cure", "doctors", "virus", "lockdown", "report", "claim"];
            let e = HashingEmbedder::default();
            let documents: Vec<Document> = words
                .chunks(3)
                .enumerate()
                .map(|(d, sents)| Document {
                    url: format!("u{d}"),
                    text: sents.iter().map(|s| s.iter().map(|&w| VOCAB[w]).collect::<Vec<_>>().join(" ") + ".").collect::<Vec<_>>().join(" "),
                })
                .collect();
            let got = select_sentences("bleach cure for the virus", &documents, k, &e).unwrap();
            proptest::prop_assert!(got.len() <= k);
            proptest::prop_assert!(got.windows(2).all(|w| w[0].score >= w[1].score - 1e-9));
            let texts: Vec<String> = got.iter().map(|s| s.text.clone()).collect();
            let pooled = embed_external_knowledge(&texts, &e).unwrap();
            proptest::prop_assert_eq!(pooled.len(), e.dim());
            let norm: f64 = pooled.iter().map(|x| x * x).sum::<f64>().sqrt();
            proptest::prop_assert_eq!(norm == 0.0, texts.is_empty());
        }
    }

    #[test]
    fn no_sentences_gives_empty_result() {
        let e = HashingEmbedder::default();
        assert!(select_sentences("bleach cures", &[], 10, &e).unwrap().is_empty());
        let d = vec![Document { url: "x".into(), text: "the of and. to be.".into() }];
        assert!(select_sentences("bleach cures", &d, 10, &e).unwrap().is_empty());
    }

    #[test]
    fn default_k_is_ten() {
        assert_eq!(RetrievalConfig::default().k, 10);
        assert_eq!(RetrievalConfig::default().results_per_query, 5);
    }

    fn stub() -> TableEmbedder {
        TableEmbedder {
            dim: 2,
            table: HashMap::from([("a".to_string(), vec![1.0, 0.0]), ("b".to_string(), vec![0.0, 1.0])]),
        }
    }

    #[test]
    fn pooling() {
        let e = stub();
        assert_eq!(embed_external_knowledge(&[], &e).unwrap(), vec![0.0, 0.0]);
        assert_eq!(embed_external_knowledge(&["a".into()], &e).unwrap(), vec![1.0, 0.0]);
        assert_eq!(embed_external_knowledge(&["a".into(), "b".into()], &e).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn retrieve_from_offline_corpus() {
        let corpus = OfflineCorpus::new(docs(), HashMap::new());
        let e = HashingEmbedder::default();
        let ek = retrieve("t1", "Is bleach spreading? @someone https://x.y", &corpus, &e, &RetrievalConfig::default()).unwrap();
        assert!(!ek.sentences.is_empty() && ek.sentences.len() <= 10);
        assert!(ek.embedding.iter().any(|x| *x != 0.0));
        assert_eq!(ek.embedding.len(), e.dim());

        let none = retrieve("t2", "zzzz qqqq", &corpus, &e, &RetrievalConfig::default()).unwrap();
        assert!(none.sentences.is_empty());
        assert!(none.embedding.iter().all(|x| *x == 0.0));
    }
}
