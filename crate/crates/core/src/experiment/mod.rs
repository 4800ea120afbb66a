//! Reproducible runs: strict TOML configs, provenance manifests and the
//! end-to-end pipeline shared by the command line and the examples.

pub mod config;
pub mod manifest;
pub mod pipeline;

pub use config::{CorpusSource, CorpusSpec, ExperimentConfig, SplitConfig};
pub use manifest::{FileDigest, Manifest, RunLock};
pub use pipeline::{
    load_corpus, run_ablation, run_pipeline, LoadedCorpus, PipelineOutcome, Splits, SummaryRecord, ABLATION_VARIANTS,
};
