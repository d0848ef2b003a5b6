//! Versioned model checkpoints with atomic publication.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Network, NetworkConfig};
use crate::encoder::Vocabulary;
use crate::error::{Error, Result};
use crate::features::{Normalizer, FEATURE_SCHEMA_VERSION};
use crate::params::ParamStore;

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Everything needed to classify a raw tweet: weights, vocabulary and the
/// feature normalizers fitted on the training split.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub feature_schema_version: String,
    pub vocab_hash: String,
    pub vocab: Vocabulary,
    pub tweet_normalizer: Normalizer,
    pub user_normalizer: Normalizer,
    pub config: NetworkConfig,
    pub params: ParamStore<f64>,
}

impl Checkpoint {
    pub fn new(network: &Network<f64>, vocab: Vocabulary, tweet_normalizer: Normalizer, user_normalizer: Normalizer) -> Self {
        Self {
            format_version: CHECKPOINT_FORMAT_VERSION,
            feature_schema_version: FEATURE_SCHEMA_VERSION.to_string(),
            vocab_hash: vocab.hash(),
            vocab,
            tweet_normalizer,
            user_normalizer,
            config: network.config.clone(),
            params: network.store.clone(),
        }
    }

    pub fn network(&self) -> Result<Network<f64>> {
        Network::from_params(self.config.clone(), self.params.clone())
    }

    /// Writes to a temporary sibling and renames it over `path`, so readers
    /// never observe a partial file.
    pub fn save(&self, path: &Path) -> Result<()> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
        serde_json::to_writer(&mut tmp, self)?;
        tmp.flush().map_err(|e| Error::io(tmp.path(), e))?;
        tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut ck: Checkpoint = serde_json::from_reader(std::io::BufReader::new(file))?;
        ck.check()?;
        ck.vocab.reindex();
        Ok(ck)
    }

    fn check(&self) -> Result<()> {
        if self.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::Schema { expected: format!("format {CHECKPOINT_FORMAT_VERSION}"), found: format!("format {}", self.format_version) });
        }
        if self.feature_schema_version != FEATURE_SCHEMA_VERSION {
            return Err(Error::Schema { expected: FEATURE_SCHEMA_VERSION.into(), found: self.feature_schema_version.clone() });
        }
        if self.vocab.hash() != self.vocab_hash {
            return Err(Error::Schema { expected: format!("vocabulary {}", self.vocab_hash), found: format!("vocabulary {}", self.vocab.hash()) });
        }
        if self.vocab.len() != self.config.vocab_size {
            return Err(Error::Schema { expected: format!("{} tokens", self.config.vocab_size), found: format!("{} tokens", self.vocab.len()) });
        }
        Ok(())
    }
}
