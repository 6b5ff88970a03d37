//! Context-aware re-ranking for multi-page product search.
//!
//! When a shopper moves past the first result page, the items they already
//! clicked say a lot about what they want. This crate re-ranks the remaining
//! candidates with a small embedding model whose context mixes the query, a
//! long-term user vector and the clicks from earlier pages, and compares it
//! against lexical relevance-feedback baselines on synthetic session logs.
//!
//! - [`session`]: sessions, candidate sets and training entries.
//! - [`synth`]: a latent-preference generator for catalogs and sessions.
//! - [`cem`]: the embedding model and its trainer.
//! - [`lexical`]: query likelihood, RM3, popularity and random baselines.
//! - [`metrics`]: MAP, MRR, NDCG and paired significance tests.
//! - [`harness`]: experiment configs, comparisons, sweeps and the CLI commands.

// Validation uses `!(x > 0.0)` so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cem;
pub mod error;
pub mod harness;
pub mod jsonl;
pub mod lexical;
pub mod metrics;
pub mod rng;
pub mod session;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
