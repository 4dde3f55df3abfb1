//! Desk-scale unsupervised hybrid retrieval.
//!
//! The pipeline has three independently usable layers:
//!
//! - **Lexical**: an inverted index with BM25 scoring ([`lexical`]).
//! - **Dense**: a compact embedding encoder trained without labels by
//!   iterative contrastive learning over cloze-style pairs ([`encoder`],
//!   [`trainer`], [`dense`]).
//! - **Fusion**: final score = dense cosine x BM25 over the lexical
//!   candidate pool ([`fusion`]), evaluated with nDCG@k ([`eval`]).
//!
//! See the `examples/` directory for one runnable example per capability,
//! and the `hydense` binary for the file-based pipeline.

pub mod config;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod lexical;

mod binio;

pub use config::{Bm25Params, RunConfig, TokenizerConfig, TrainConfig};
pub use error::{Error, Result};
