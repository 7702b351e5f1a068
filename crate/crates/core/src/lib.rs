//! Privacy-preserving text rewriting.
//!
//! The crate detects PII, keeps a streaming tree of accepted writing styles,
//! scores candidate rewrites with a composite reward and exports preference
//! pairs for downstream fine-tuning. Everything runs offline with the
//! hashed embedder and the mock paraphraser; remote backends are optional.

pub mod embedding;
pub mod error;
mod http;
pub mod metrics;
pub mod pii;
pub mod pipeline;
pub mod policy;
pub mod prompting;
pub mod reward;
pub mod style_pool;

pub use error::{Error, Result};
