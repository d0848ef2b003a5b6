use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::dataset::ingest::{read_jsonl, Record};
use crate::error::{Error, Result};
use crate::text::{is_stopword, words};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub url: String,
    pub text: String,
}

/// Ranked web search: most relevant document first.
pub trait SearchClient: Send + Sync {
    fn search(&self, query: &str, n: usize) -> Result<Vec<Document>>;
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct IndexEntry {
    query: String,
    urls: Vec<String>,
}

impl Record for Document {
    fn check(&self) -> Result<()> {
        if self.url.is_empty() {
            return Err(Error::Invalid("document url is empty".into()));
        }
        Ok(())
    }
    fn key(&self) -> Option<&str> {
        Some(&self.url)
    }
}

impl Record for IndexEntry {
    fn check(&self) -> Result<()> {
        Ok(())
    }
}

/// Deterministic offline search over a fixed document set.
///
/// On disk: `documents.jsonl` (`{"url", "text"}` per line) and an optional
/// `index.jsonl` (`{"query", "urls"}`) pinning the ranking for known queries.
/// Other queries rank documents by the number of distinct query content
/// words they contain, ties in file order; documents sharing no word are
/// not returned.
#[derive(Clone, Debug, Default)]
pub struct OfflineCorpus {
    documents: Vec<Document>,
    by_url: HashMap<String, usize>,
    index: HashMap<String, Vec<String>>,
    terms: Vec<HashSet<String>>,
}

fn content_words(text: &str) -> HashSet<String> {
    words(text).into_iter().filter(|w| !is_stopword(w)).collect()
}

impl OfflineCorpus {
    pub fn new(documents: Vec<Document>, index: HashMap<String, Vec<String>>) -> Self {
        let by_url = documents.iter().enumerate().map(|(i, d)| (d.url.clone(), i)).collect();
        let terms = documents.iter().map(|d| content_words(&d.text)).collect();
        Self { documents, by_url, index, terms }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let docs = read_jsonl::<Document>(&dir.join("documents.jsonl"))?;
        for e in &docs.errors {
            log::warn!("documents.jsonl line {}: {}", e.line, e.message);
        }
        let index_path = dir.join("index.jsonl");
        let index = if index_path.exists() {
            read_jsonl::<IndexEntry>(&index_path)?.records.into_iter().map(|e| (e.query, e.urls)).collect()
        } else {
            HashMap::new()
        };
        Ok(Self::new(docs.records, index))
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

impl SearchClient for OfflineCorpus {
    fn search(&self, query: &str, n: usize) -> Result<Vec<Document>> {
        if let Some(urls) = self.index.get(query) {
            return Ok(urls
                .iter()
                .filter_map(|u| self.by_url.get(u).map(|&i| self.documents[i].clone()))
                .take(n)
                .collect());
        }
        let q = content_words(query);
        let mut scored: Vec<(usize, usize)> = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.intersection(&q).count(), i))
            .filter(|&(s, _)| s > 0)
            .collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        Ok(scored.into_iter().take(n).map(|(_, i)| self.documents[i].clone()).collect())
    }
}

/// Live search through a JSON search API that answers
/// `GET {endpoint}?key=..&q=..&num=..` with `{"items": [{"link": ..}]}`;
/// each hit's page is then fetched and reduced to plain text.
pub struct HttpSearchClient {
    endpoint: String,
    api_key: String,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct SearchResponse {
    #[serde(default)]
    items: Vec<SearchItem>,
}

#[derive(Deserialize)]
struct SearchItem {
    link: String,
}

impl HttpSearchClient {
    pub fn new(endpoint: impl Into<String>, api_key: impl Into<String>) -> Result<Self> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(10))
            .build()
            .map_err(|e| Error::Http(e.to_string()))?;
        Ok(Self { endpoint: endpoint.into(), api_key: api_key.into(), client })
    }

    fn page_text(&self, url: &str) -> Result<String> {
        let body = self
            .client
            .get(url)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.text())
            .map_err(|e| Error::Http(format!("{url}: {e}")))?;
        Ok(html_to_text(&body))
    }
}

impl SearchClient for HttpSearchClient {
    fn search(&self, query: &str, n: usize) -> Result<Vec<Document>> {
        let num = n.to_string();
        let url = url::Url::parse_with_params(&self.endpoint, [("key", self.api_key.as_str()), ("q", query), ("num", num.as_str())])
            .map_err(|e| Error::Http(format!("{}: {e}", self.endpoint)))?;
        let resp: SearchResponse = self
            .client
            .get(url)
            .send()
            .and_then(|r| r.error_for_status())
            .and_then(|r| r.json())
            .map_err(|e| Error::Http(e.to_string()))?;
        let mut out = Vec::new();
        for item in resp.items.into_iter().take(n) {
            match self.page_text(&item.link) {
                Ok(text) => out.push(Document { url: item.link, text }),
                Err(e) => log::warn!("{e}"),
            }
        }
        Ok(out)
    }
}

/// Visible text of an HTML page: script/style bodies and tags removed,
/// block-level tags turned into line breaks, common entities decoded.
pub fn html_to_text(html: &str) -> String {
    let mut out = String::with_capacity(html.len() / 2);
    let lower = html.to_ascii_lowercase();
    let mut i = 0;
    while i < html.len() {
        if html.as_bytes()[i] == b'<' {
            let rest = &lower[i..];
            let skip_to = ["script", "style", "noscript"].iter().find_map(|tag| {
                rest.strip_prefix('<')
                    .filter(|r| r.starts_with(tag))
                    .and_then(|_| rest.find(&format!("</{tag}")))
                    .map(|end| i + end)
            });
            if let Some(end) = skip_to {
                i = end;
            }
            let close = lower[i..].find('>').map_or(html.len(), |e| i + e + 1);
            let tag = &lower[i..close];
            if ["<p", "</p", "<br", "<div", "</div", "<li", "<h", "</h", "<tr"].iter().any(|t| tag.starts_with(t)) {
                out.push('\n');
            } else {
                out.push(' ');
            }
            i = close;
        } else {
            let next = html[i..].find('<').map_or(html.len(), |e| i + e);
            out.push_str(&html[i..next]);
            i = next;
        }
    }
    let decoded = out
        .replace("&nbsp;", " ")
        .replace("&amp;", "&")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'");
    decoded
        .lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>().join(" "))
        .filter(|l| !l.is_empty())
        .collect::<Vec<_>>()
        .join("\n")
}
