use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classifier::{ClassifierConfig, ClassifierTrainConfig};
use crate::corpus::SyntheticConfig;
use crate::decoding::BeamConfig;
use crate::error::{AcmError, Result};
use crate::summarizer::{ConditioningWeights, SummarizerConfig, SummarizerTrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusSource {
    Synthetic,
    Jsonl,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusSpec {
    pub source: CorpusSource,
    /// Cluster records for `source = "jsonl"`.
    pub path: Option<PathBuf>,
    /// Vocabulary file; built from the corpus when absent.
    pub vocab: Option<PathBuf>,
    /// Size cap when building a vocabulary from JSONL text.
    pub max_vocab: Option<usize>,
    pub synthetic: SyntheticConfig,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            source: CorpusSource::Synthetic,
            path: None,
            vocab: None,
            max_vocab: Some(20_000),
            synthetic: SyntheticConfig::default(),
        }
    }
}

/// Held-out clusters: validation for checkpoint selection, test for decoding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub val_clusters: usize,
    pub test_clusters: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            val_clusters: 5,
            test_clusters: 10,
        }
    }
}

/// Everything a run depends on. Saved next to its outputs so a run can be
/// repeated exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Conditioning class.
    pub attribute: usize,
    pub output_dir: PathBuf,
    pub corpus: CorpusSpec,
    pub split: SplitConfig,
    pub classifier: ClassifierConfig,
    pub classifier_train: ClassifierTrainConfig,
    pub summarizer: SummarizerConfig,
    pub summarizer_train: SummarizerTrainConfig,
    pub weights: ConditioningWeights,
    pub beam: BeamConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            attribute: 0,
            output_dir: PathBuf::from("runs/default"),
            corpus: CorpusSpec::default(),
            split: SplitConfig::default(),
            classifier: ClassifierConfig {
                d_model: 32,
                heads: 2,
                layers: 1,
                ffn_dim: 64,
                max_len: 128,
                ..ClassifierConfig::default()
            },
            classifier_train: ClassifierTrainConfig::default(),
            summarizer: SummarizerConfig::default(),
            summarizer_train: SummarizerTrainConfig::default(),
            weights: ConditioningWeights::default(),
            beam: BeamConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| AcmError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| AcmError::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            AcmError::Config(m) => AcmError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_toml()).map_err(|e| AcmError::io(path, e))
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        self.beam.validate()?;
        if self.corpus.source == CorpusSource::Jsonl && self.corpus.path.is_none() {
            return Err(AcmError::Config("corpus.path is required for a jsonl corpus".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::from_toml_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::from_toml_str("seed = 3\n[weights]\nalpha4 = 1.0\n").unwrap_err();
        assert!(err.to_string().contains("alpha4"), "{err}");
        let top = ExperimentConfig::from_toml_str("sead = 3\n").unwrap_err();
        assert!(top.to_string().contains("sead"));
    }

    #[test]
    fn partial_file_takes_defaults() {
        let c = ExperimentConfig::from_toml_str("seed = 11\n[beam]\nbeam_width = 2\nshortlist_k = 4\n").unwrap();
        assert_eq!(c.seed, 11);
        assert_eq!(c.beam.beam_width, 2);
        assert_eq!(c.weights, ConditioningWeights::default());
    }

    #[test]
    fn jsonl_needs_path() {
        assert!(ExperimentConfig::from_toml_str("[corpus]\nsource = \"jsonl\"\n").is_err());
    }
}
