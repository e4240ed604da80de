//! Sentence boundary detection for legal text.
//!
//! The crate covers the full classical pipeline: a lossless aggressive
//! tokenizer, BILOU span labeling, windowed CRF feature extraction, a
//! linear-chain CRF with OWL-QN training and Viterbi decoding, a rule-based
//! baseline splitter, and a tokenizer-decoupled token-binary evaluation.
//!
//! ```
//! use legal_sbd::tokenizer::tokenize;
//!
//! let seq = tokenize("A. B.");
//! assert_eq!(seq.len(), 5);
//! assert_eq!(seq.detokenize(), "A. B.");
//! ```

pub mod baseline;
pub mod corpus;
pub mod crf;
pub mod error;
pub mod eval;
pub mod features;
pub mod pipeline;
pub mod spans;
pub mod synthetic;
pub mod tokenizer;

pub use error::{Error, Result};
