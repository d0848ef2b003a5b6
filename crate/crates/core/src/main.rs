use std::collections::{HashMap, HashSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use tweetcheck::dataset::{
    self, dataset_stats, export_annotation_tasks, ingest_tweets, label_by_nli, label_by_org_account, label_by_similarity,
    label_by_url_propagation, read_jsonl, split_train_test, write_jsonl, FixtureTweetSource, HttpTweetSource, Label, Labelled,
    SupportStatement, TweetRecord, TweetSource, UserRecord,
};
use tweetcheck::embedding::HashingEmbedder;
use tweetcheck::evaluation::{evaluate, plot_loss_curves, run_ablation, write_ablation, AblationData, AblationSpec};
use tweetcheck::features::DomainScoreTable;
use tweetcheck::knowledge::{EkCache, HttpSearchClient, OfflineCorpus};
use tweetcheck::network::{Checkpoint, Network, NetworkConfig};
use tweetcheck::nli::LexicalNli;
use tweetcheck::pipeline::{Pipeline, Resources};
use tweetcheck::service::{http, Service, ServiceConfig};
use tweetcheck::synthetic::{desk_network, desk_training, SyntheticConfig};
use tweetcheck::training::{train, write_history, TrainingConfig};

#[derive(Parser)]
#[command(name = "tweetcheck", version, about = "Fake-tweet classification: data pipeline, training, evaluation and serving")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and deduplicate a JSONL tweet file, or hydrate a list of ids.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Treat `input` as one tweet id per line and resolve ids through this
        /// JSONL fixture (or `--tweet-api`).
        #[arg(long)]
        ids: bool,
        #[arg(long)]
        fixture: Option<PathBuf>,
        #[arg(long)]
        tweet_api: Option<String>,
    },
    /// Run one weak-labelling stage; already labelled tweets are left alone.
    Label {
        #[arg(long, value_enum)]
        stage: Stage,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// `url` stage: JSON object mapping URL to "fake"/"genuine".
        #[arg(long)]
        url_verdicts: Option<PathBuf>,
        /// `org` stage: one official-account user id per line.
        #[arg(long)]
        org_users: Option<PathBuf>,
        /// `sim` and `nli` stages: JSONL fact-check statements.
        #[arg(long)]
        statements: Option<PathBuf>,
        #[arg(long, default_value_t = dataset::DEFAULT_SIMILARITY_THRESHOLD)]
        threshold: f64,
        #[arg(long, default_value_t = 256)]
        embed_dim: usize,
    },
    /// Stratified train/test split over human-labelled tweets.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = dataset::DEFAULT_TEST_FRACTION)]
        test_fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-class statistics as JSON plus SVG charts.
    Stats {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Annotation sheet for unlabelled tweets.
    ExportAnnotations {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a classifier and write checkpoint, history and loss curves.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        network: Option<PathBuf>,
        #[arg(long)]
        labelled: PathBuf,
        #[arg(long)]
        unlabelled: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20_000)]
        vocab_size: usize,
        #[arg(long, default_value_t = 64)]
        ek_dim: usize,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Test-set metrics for a checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Training file; evaluation refuses ids that also occur here.
        #[arg(long)]
        train: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Objective or architecture ablation on generated data.
    Ablate {
        /// JSON ablation spec (rows and seeds).
        #[arg(long, conflicts_with = "preset")]
        spec: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        #[arg(long)]
        synthetic: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4")]
        seeds: Vec<u64>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// HTTP classification service with feedback-gated online learning.
    Serve {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
        /// JSONL tweets resolvable by id.
        #[arg(long)]
        fixture: Option<PathBuf>,
        #[arg(long)]
        tweet_api: Option<String>,
        /// Labelled JSONL tweets guarding online updates.
        #[arg(long)]
        sanity: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        feedback_log: Option<PathBuf>,
        /// Where accepted online updates are published.
        #[arg(long)]
        publish: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
    },
    /// Write a generated two-topic dataset as JSONL.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Stage {
    Url,
    Org,
    Sim,
    Nli,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Objectives,
    Architectures,
}

#[derive(Args, Clone, Default)]
struct DataArgs {
    /// JSONL user records.
    #[arg(long)]
    users: Option<PathBuf>,
    /// TSV of domain and credibility score.
    #[arg(long)]
    domains: Option<PathBuf>,
    /// Offline search corpus directory (documents.jsonl, index.json).
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Live search endpoint; the key is read from TWEETCHECK_SEARCH_KEY.
    #[arg(long, conflicts_with = "corpus")]
    search_api: Option<String>,
    #[arg(long)]
    ek_cache: Option<PathBuf>,
}

impl DataArgs {
    fn users(&self) -> anyhow::Result<HashMap<String, UserRecord>> {
        Ok(match &self.users {
            Some(p) => read_jsonl::<UserRecord>(p)?.records.into_iter().map(|u| (u.user_id.clone(), u)).collect(),
            None => HashMap::new(),
        })
    }

    fn resources(&self, ek_dim: usize) -> anyhow::Result<Resources> {
        let mut r = Resources::offline(Arc::new(HashingEmbedder::new(ek_dim)));
        if let Some(p) = &self.domains {
            r.domains = DomainScoreTable::load(p, 0.5)?;
        }
        if let Some(p) = &self.corpus {
            r.search = Some(Arc::new(OfflineCorpus::load(p)?));
        }
        if let Some(endpoint) = &self.search_api {
            let key = std::env::var("TWEETCHECK_SEARCH_KEY").unwrap_or_default();
            r.search = Some(Arc::new(HttpSearchClient::new(endpoint.clone(), key)?));
        }
        if let Some(p) = &self.ek_cache {
            r.cache = Arc::new(EkCache::open(p)?);
        }
        Ok(r)
    }
}

fn read_tweets(path: &Path) -> anyhow::Result<Vec<TweetRecord>> {
    let ingested = ingest_tweets(path)?;
    for e in &ingested.errors {
        log::warn!("{}:{}: {}", path.display(), e.line, e.message);
    }
    Ok(ingested.records)
}

fn load_json<T: serde::de::DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

fn tweet_source(fixture: Option<&Path>, api: Option<&str>) -> anyhow::Result<Arc<dyn TweetSource>> {
    Ok(match (fixture, api) {
        (Some(p), _) => Arc::new(FixtureTweetSource::from_jsonl(p, None)?),
        (None, Some(base)) => Arc::new(HttpTweetSource::new(base, std::env::var("TWEETCHECK_TWEET_TOKEN").ok())?),
        (None, None) => Arc::new(FixtureTweetSource::default()),
    })
}

fn label(stage: Stage, tweets: &[TweetRecord], args: &LabelInputs) -> anyhow::Result<Labelled> {
    let statements = || -> anyhow::Result<Vec<SupportStatement>> {
        let p = args.statements.as_deref().context("--statements is required for this stage")?;
        Ok(read_jsonl::<SupportStatement>(p)?.records)
    };
    Ok(match stage {
        Stage::Url => {
            let p = args.url_verdicts.as_deref().context("--url-verdicts is required for the url stage")?;
            let verdicts: HashMap<String, Label> = load_json(p)?;
            label_by_url_propagation(tweets, &verdicts)
        }
        Stage::Org => {
            let p = args.org_users.as_deref().context("--org-users is required for the org stage")?;
            let ids: HashSet<String> =
                std::fs::read_to_string(p)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
            label_by_org_account(tweets, &ids)
        }
        Stage::Sim => label_by_similarity(tweets, &statements()?, &HashingEmbedder::new(args.embed_dim), args.threshold)?,
        Stage::Nli => label_by_nli(tweets, &statements()?, &LexicalNli::default()),
    })
}

struct LabelInputs {
    url_verdicts: Option<PathBuf>,
    org_users: Option<PathBuf>,
    statements: Option<PathBuf>,
    threshold: f64,
    embed_dim: usize,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Ingest { input, out, ids, fixture, tweet_api } => {
            let (records, errors) = if ids {
                let list: Vec<String> =
                    std::fs::read_to_string(&input)?.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect();
                let source = tweet_source(fixture.as_deref(), tweet_api.as_deref())?;
                dataset::hydrate::hydrate(&list, source.as_ref())
            } else {
                let ingested = ingest_tweets(&input)?;
                (ingested.records, ingested.errors)
            };
            for e in &errors {
                eprintln!("line {}: {}", e.line, e.message);
            }
            write_jsonl(&out, &records)?;
            println!("{} tweets written, {} rejected", records.len(), errors.len());
        }
        Command::Label { stage, input, out, url_verdicts, org_users, statements, threshold, embed_dim } => {
            let tweets = read_tweets(&input)?;
            let inputs = LabelInputs { url_verdicts, org_users, statements, threshold, embed_dim };
            let labelled = label(stage, &tweets, &inputs)?;
            write_jsonl(&out, &labelled.tweets)?;
            println!("{}", serde_json::to_string_pretty(&labelled.report)?);
        }
        Command::Split { input, out_dir, test_fraction, seed } => {
            let split = split_train_test(&read_tweets(&input)?, test_fraction, seed)?;
            std::fs::create_dir_all(&out_dir)?;
            write_jsonl(&out_dir.join("train.jsonl"), &split.train)?;
            write_jsonl(&out_dir.join("test.jsonl"), &split.test)?;
            write_jsonl(&out_dir.join("unlabelled.jsonl"), &split.unlabelled)?;
            println!("train {} test {} unlabelled {}", split.train.len(), split.test.len(), split.unlabelled.len());
        }
        Command::Stats { input, out_dir } => {
            let report = dataset_stats(&read_tweets(&input)?);
            for p in dataset::stats::write_report(&report, &out_dir)? {
                println!("{}", p.display());
            }
        }
        Command::ExportAnnotations { input, out } => {
            let pending: Vec<TweetRecord> = read_tweets(&input)?.into_iter().filter(|t| !t.is_labelled()).collect();
            let path = export_annotation_tasks(&pending, &out)?;
            println!("{} tasks written to {}", pending.len(), path.display());
        }
        Command::Train { config, network, labelled, unlabelled, out, vocab_size, ek_dim, data } => {
            let cfg = match &config {
                Some(p) => TrainingConfig::load(p)?,
                None => TrainingConfig::default(),
            };
            let train_tweets = read_tweets(&labelled)?;
            let unl_tweets = match &unlabelled {
                Some(p) => read_tweets(p)?,
                None => Vec::new(),
            };
            let users = data.users()?;
            let pipeline = Pipeline::fit(&train_tweets, &users, vocab_size, data.resources(ek_dim)?)?;
            let train_ex = pipeline.examples(&train_tweets, &users)?;
            let mut unl_ex = pipeline.examples(&unl_tweets, &users)?;
            unl_ex.iter_mut().for_each(|e| e.label = None);
            let mut net_cfg = match &network {
                Some(p) => load_json::<NetworkConfig>(p)?,
                None => NetworkConfig::standard(pipeline.vocab.len(), ek_dim),
            };
            net_cfg.vocab_size = pipeline.vocab.len();
            net_cfg.ek_dim = ek_dim;
            let outcome = train(Network::new(net_cfg, cfg.seed)?, &train_ex, &unl_ex, &cfg)?;
            std::fs::create_dir_all(&out)?;
            Checkpoint::new(&outcome.network, pipeline.vocab, pipeline.tweet_normalizer, pipeline.user_normalizer)
                .save(&out.join("checkpoint.json"))?;
            write_history(&out.join("history.csv"), &outcome.history)?;
            plot_loss_curves(&[("run".into(), outcome.history.clone())], &out.join("loss_curves.svg"))?;
            println!(
                "trained {} steps, best step {}, best validation macro F1 {:?}{}",
                outcome.history.len(),
                outcome.best_step,
                outcome.best_val_f1,
                if outcome.stopped_early { " (stopped early)" } else { "" }
            );
        }
        Command::Evaluate { checkpoint, test, train, out, data } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let net = ck.network()?;
            let pipeline = Pipeline::from_checkpoint(&ck, data.resources(net.config.ek_dim)?);
            let test_ex = pipeline.examples(&read_tweets(&test)?, &data.users()?)?;
            let train_ids: Vec<String> = match &train {
                Some(p) => read_tweets(p)?.into_iter().map(|t| t.tweet_id).collect(),
                None => Vec::new(),
            };
            let metrics = evaluate(&net, &test_ex, train_ids.iter().map(String::as_str))?;
            let json = serde_json::to_string_pretty(&metrics)?;
            if let Some(p) = out {
                std::fs::write(&p, &json)?;
            }
            println!("{json}");
        }
        Command::Ablate { spec, preset, synthetic, seeds, out_dir } => {
            let synth: SyntheticConfig = match &synthetic {
                Some(p) => load_json(p)?,
                None => SyntheticConfig::default(),
            };
            let spec = match (spec, preset) {
                (Some(p), _) => AblationSpec::load(&p)?,
                (None, Some(Preset::Objectives)) => AblationSpec::objectives(&desk_training(), &desk_network(&synth), seeds),
                (None, Some(Preset::Architectures)) => AblationSpec::architectures(&desk_training(), &desk_network(&synth), seeds),
                (None, None) => bail!("pass --spec or --preset"),
            };
            let data = synth.generate()?;
            let results = run_ablation(&spec, &AblationData { train: &data.train, unlabelled: &data.unlabelled, test: &data.test })?;
            write_ablation(&results, &out_dir)?;
            let curves: Vec<(String, Vec<_>)> =
                results.iter().filter_map(|r| r.histories.first().map(|h| (r.name.clone(), h.clone()))).collect();
            plot_loss_curves(&curves, &out_dir.join("loss_curves.svg"))?;
            print!("{}", std::fs::read_to_string(out_dir.join("ablation.md"))?);
        }
        Command::Serve { checkpoint, addr, fixture, tweet_api, sanity, config, feedback_log, publish, data } => {
            let mut cfg: ServiceConfig = match &config {
                Some(p) => load_json(p)?,
                None => ServiceConfig::default(),
            };
            cfg.feedback_log = feedback_log.or(cfg.feedback_log);
            cfg.checkpoint_out = publish.or(cfg.checkpoint_out);
            let ck = Checkpoint::load(&checkpoint)?;
            let resources = data.resources(ck.config.ek_dim)?;
            let sanity_ex = match &sanity {
                Some(p) => Pipeline::from_checkpoint(&ck, resources.clone()).examples(&read_tweets(p)?, &data.users()?)?,
                None => Vec::new(),
            };
            let service = Service::new(ck, resources, tweet_source(fixture.as_deref(), tweet_api.as_deref())?, sanity_ex, cfg)?;
            http::serve(Arc::new(service), addr)?;
        }
        Command::Synth { config, out_dir } => {
            let synth: SyntheticConfig = match &config {
                Some(p) => load_json(p)?,
                None => SyntheticConfig::default(),
            };
            let records = synth.records()?;
            let (labelled, test_end) = (synth.labelled, synth.labelled + synth.test);
            std::fs::create_dir_all(&out_dir)?;
            write_jsonl(&out_dir.join("train.jsonl"), &records[..labelled])?;
            write_jsonl(&out_dir.join("test.jsonl"), &records[labelled..test_end])?;
            write_jsonl(&out_dir.join("unlabelled.jsonl"), &records[test_end..])?;
            write_json(&out_dir.join("synthetic.json"), &synth)?;
            println!("{} records written to {}", records.len(), out_dir.display());
        }
    }
    Ok(())
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
