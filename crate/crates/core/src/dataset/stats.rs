use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::records::{Label, MediaCounts, TweetRecord};
use crate::error::{Error, Result};
use crate::features::sentiment::{display_bin, sentiment};
use crate::plots::grouped_bars;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub total: u64,
    pub mean: f64,
    pub median: f64,
    pub max: u64,
}

impl Summary {
    fn of(values: &mut [u64]) -> Self {
        if values.is_empty() {
            return Self::default();
        }
        values.sort_unstable();
        let n = values.len();
        let total: u64 = values.iter().sum();
        let median = if n % 2 == 1 { values[n / 2] as f64 } else { (values[n / 2 - 1] + values[n / 2]) as f64 / 2.0 };
        Self { total, mean: total as f64 / n as f64, median, max: values[n - 1] }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassStats {
    pub tweets: usize,
    /// Lowercased hashtag → occurrences.
    pub hashtags: BTreeMap<String, usize>,
    pub urls_per_tweet: f64,
    pub media: MediaCounts,
    /// Counts on the -2..=2 display axis, index 0 ↔ -2.
    pub sentiment_histogram: [usize; 5],
    pub mean_sentiment: f64,
    pub likes: Summary,
    pub retweets: Summary,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub total: usize,
    pub fake: ClassStats,
    pub genuine: ClassStats,
    pub unlabelled: ClassStats,
}

fn class_stats(tweets: &[&TweetRecord]) -> ClassStats {
    let mut s = ClassStats { tweets: tweets.len(), ..Default::default() };
    if tweets.is_empty() {
        return s;
    }
    let mut urls = 0usize;
    let mut sent = 0.0;
    let mut likes = Vec::with_capacity(tweets.len());
    let mut retweets = Vec::with_capacity(tweets.len());
    for t in tweets {
        for h in &t.hashtags {
            *s.hashtags.entry(h.trim_start_matches('#').to_lowercase()).or_default() += 1;
        }
        urls += t.urls.len();
        s.media.photo += t.media.photo;
        s.media.video += t.media.video;
        s.media.gif += t.media.gif;
        let p = sentiment(&t.text);
        sent += p;
        s.sentiment_histogram[(display_bin(p) + 2) as usize] += 1;
        likes.push(t.favourite_count);
        retweets.push(t.retweet_count);
    }
    let n = tweets.len() as f64;
    s.urls_per_tweet = urls as f64 / n;
    s.mean_sentiment = sent / n;
    s.likes = Summary::of(&mut likes);
    s.retweets = Summary::of(&mut retweets);
    s
}

pub fn dataset_stats(tweets: &[TweetRecord]) -> StatsReport {
    let pick = |l: Option<Label>| tweets.iter().filter(|t| t.label == l).collect::<Vec<_>>();
    StatsReport {
        total: tweets.len(),
        fake: class_stats(&pick(Some(Label::Fake))),
        genuine: class_stats(&pick(Some(Label::Genuine))),
        unlabelled: class_stats(&pick(None)),
    }
}

fn top_hashtags(report: &StatsReport, n: usize) -> Vec<String> {
    let mut all: BTreeMap<&str, usize> = BTreeMap::new();
    for c in [&report.fake, &report.genuine] {
        for (h, k) in &c.hashtags {
            *all.entry(h).or_default() += k;
        }
    }
    let mut ranked: Vec<_> = all.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    ranked.into_iter().take(n).map(|(h, _)| h.to_string()).collect()
}

/// Writes `stats.json` and one SVG per chart into `dir`; returns the paths written.
pub fn write_report(report: &StatsReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let json = dir.join("stats.json");
    std::fs::write(&json, serde_json::to_string_pretty(report)?).map_err(|e| Error::io(&json, e))?;
    let mut written = vec![json];
    let classes = [("fake", &report.fake), ("genuine", &report.genuine)];
    let series = |f: &dyn Fn(&ClassStats) -> Vec<f64>| -> Vec<(String, Vec<f64>)> {
        classes.iter().map(|(n, c)| (n.to_string(), f(c))).collect()
    };

    let tags = top_hashtags(report, 10);
    let charts: Vec<(&str, &str, Vec<String>, Vec<(String, Vec<f64>)>)> = vec![
        (
            "hashtags.svg",
            "Top hashtags",
            tags.clone(),
            series(&|c| tags.iter().map(|t| *c.hashtags.get(t).unwrap_or(&0) as f64).collect()),
        ),
        ("urls.svg", "URLs per tweet", vec!["urls".into()], series(&|c| vec![c.urls_per_tweet])),
        (
            "media.svg",
            "Media attachments",
            vec!["photo".into(), "video".into(), "gif".into()],
            series(&|c| vec![c.media.photo as f64, c.media.video as f64, c.media.gif as f64]),
        ),
        (
            "sentiment.svg",
            "Sentiment",
            (-2..=2).map(|b| b.to_string()).collect(),
            series(&|c| c.sentiment_histogram.iter().map(|&k| k as f64).collect()),
        ),
        (
            "engagement.svg",
            "Mean likes and retweets",
            vec!["likes".into(), "retweets".into()],
            series(&|c| vec![c.likes.mean, c.retweets.mean]),
        ),
    ];
    for (file, title, cats, data) in charts {
        let p = dir.join(file);
        grouped_bars(&p, title, &cats, &data)?;
        written.push(p);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::records::LabelSource;
    use chrono::{TimeZone, Utc};

    #[test]
    fn empty_dataset_is_all_zero() {
        assert_eq!(dataset_stats(&[]), StatsReport::default());
    }

    #[test]
    fn five_tweet_hand_tally() {
        let ts = Utc.timestamp_opt(1_590_000_000, 0).unwrap();
        let mk = |id: &str, text: &str, label: Option<Label>| {
            let t = TweetRecord::new(id, text, "u", ts);
            match label {
                Some(l) => t.with_label(l, LabelSource::Human),
                None => t,
            }
        };
        let mut a = mk("a", "great news", Some(Label::Genuine));
        a.hashtags = vec!["covid".into(), "Vaccine".into()];
        a.urls = vec!["https://who.int".into(), "https://cdc.gov".into()];
        a.favourite_count = 10;
        a.retweet_count = 4;
        let mut b = mk("b", "neutral words", Some(Label::Genuine));
        b.hashtags = vec!["covid".into()];
        b.favourite_count = 2;
        let mut c = mk("c", "terrible hoax", Some(Label::Fake));
        c.hashtags = vec!["#COVID".into()];
        c.media.photo = 2;
        c.media.video = 1;
        c.favourite_count = 1;
        let mut d = mk("d", "plain", Some(Label::Fake));
        d.urls = vec!["http://x.y".into()];
        d.media.gif = 1;
        d.favourite_count = 3;
        d.retweet_count = 7;
        let e = mk("e", "whatever", None);

        let r = dataset_stats(&[a, b, c, d, e]);
        assert_eq!(r.total, 5);
        assert_eq!(r.genuine.tweets, 2);
        assert_eq!(r.fake.tweets, 2);
        assert_eq!(r.unlabelled.tweets, 1);
        assert_eq!(r.genuine.hashtags.get("covid"), Some(&2));
        assert_eq!(r.genuine.hashtags.get("vaccine"), Some(&1));
        assert_eq!(r.fake.hashtags.get("covid"), Some(&1));
        assert_eq!(r.genuine.urls_per_tweet, 1.0);
        assert_eq!(r.fake.urls_per_tweet, 0.5);
        assert_eq!(r.fake.media, MediaCounts { photo: 2, video: 1, gif: 1 });
        assert_eq!(r.genuine.likes, Summary { total: 12, mean: 6.0, median: 6.0, max: 10 });
        assert_eq!(r.fake.retweets, Summary { total: 7, mean: 3.5, median: 3.5, max: 7 });
        assert_eq!(r.genuine.sentiment_histogram.iter().sum::<usize>(), 2);
        assert_eq!(r.fake.sentiment_histogram[0], 1);
        assert!(r.genuine.sentiment_histogram[3] + r.genuine.sentiment_histogram[4] >= 1);
    }

    #[test]
    fn report_files_written() {
        let dir = tempfile::tempdir().unwrap();
        let files = write_report(&StatsReport::default(), dir.path()).unwrap();
        assert_eq!(files.len(), 6);
        assert!(files.iter().all(|f| f.exists()));
    }
}
