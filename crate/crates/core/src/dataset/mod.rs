//! Tweet ingestion, weak labelling, annotation, splitting and statistics.

pub mod agreement;
pub mod annotation;
pub mod hydrate;
pub mod ingest;
pub mod labelling;
pub mod records;
pub mod split;
pub mod stats;

pub use agreement::krippendorff_alpha;
pub use annotation::{export_annotation_tasks, import_annotations, sheet_agreement};
pub use hydrate::{FixtureTweetSource, HttpTweetSource, TweetSource};
pub use ingest::{ingest_tweets, read_jsonl, write_jsonl, Ingested, LineError};
pub use labelling::{
    label_by_nli, label_by_org_account, label_by_similarity, label_by_url_propagation, normalize_url, LabelReport,
    Labelled, DEFAULT_SIMILARITY_THRESHOLD,
};
pub use records::{DatasetSplit, Label, LabelSource, MediaCounts, SupportStatement, TweetRecord, UserRecord};
pub use split::{split_train_test, DEFAULT_TEST_FRACTION};
pub use stats::{dataset_stats, StatsReport};
