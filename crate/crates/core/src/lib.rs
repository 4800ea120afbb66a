//! Attribute-conditioned multi-document summarization at desk scale.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod decoding;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod graph_encoder;
pub mod layers;
pub mod numeric;
pub mod summarizer;

pub use error::{AcmError, Result};
