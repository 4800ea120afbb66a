//! Tokenization, cluster ingestion, synthetic data, prefix expansion and the
//! paragraph similarity graph.

pub mod cluster;
pub mod jsonl;
pub mod prefix;
pub mod similarity;
pub mod synthetic;
pub mod tokenize;
pub mod vocab;

pub use cluster::{DocumentCluster, ParagraphSpan, RawCluster};
pub use jsonl::{load_jsonl, read_raw_jsonl, save_jsonl};
pub use prefix::{expand_prefixes, LabeledPrefix};
pub use similarity::{build_similarity_graph, cluster_graph, SimilarityGraph};
pub use synthetic::{generate_synthetic_corpus, SyntheticConfig, SyntheticCorpus};
pub use tokenize::tokenize;
pub use vocab::{TokenId, Vocabulary, BOS, DOCSEP, EOS, PAD, UNK};
