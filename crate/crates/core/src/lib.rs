//! Data-to-text generation with translation pre-training.
//!
//! * [`mr`]: meaning representations, flattening, delexicalization.
//! * [`subword`]: byte-level BPE vocabulary shared across languages.
//! * [`seq2seq`]: transformer encoder-decoder, training and decoding.
//! * [`corpus`]: dataset loading, subsampling, the synthetic toy world and
//!   the OOV challenge-set generator.
//! * [`metrics`]: slot error rate and word-overlap metrics.
//! * [`harness`]: experiment pipeline and the human-rating service.

pub mod mr;
pub mod metrics;
pub mod subword;
pub mod seq2seq;
pub mod corpus;
pub mod harness;
