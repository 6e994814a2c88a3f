//! Data selection for low-budget active learning in machine translation.
//!
//! The crate covers the full desk-scale pipeline:
//!
//! * [`corpus`]: corpus/dictionary ingestion, pool splits and the seeded PRNG
//! * [`bpe`]: BPE learning/encoding and dictionary-preserving encoding
//! * [`ngram_lm`]: interpolated additive-smoothing n-gram language models
//! * [`translator_bridge`]: translation backends (lexical mock, external process)
//! * [`strategies`]: random, n-gram overlap, round-trip likelihood and
//!   cross-entropy difference selection
//! * [`al_sim`]: the budgeted pool-based active-learning loop
//! * [`metrics`]: corpus BLEU and dictionary-word precision/recall/F1

pub mod al_sim;
pub mod bpe;
pub mod corpus;
pub mod error;
pub mod metrics;
pub mod ngram_lm;
pub mod strategies;
pub mod synthetic;
pub mod translator_bridge;

pub use error::{Error, ErrorKind, Result};
