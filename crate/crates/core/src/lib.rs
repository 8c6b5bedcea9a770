//! Sparse composite document vectors with multi-sense word embeddings.
//!
//! The pipeline runs in stages, each with its own module:
//!
//! 1. [`corpus`]: tokenization, vocabulary and idf.
//! 2. [`sense`]: polysemy candidates, context-clustering sense induction,
//!    and `word#k` annotation.
//! 3. [`embeddings`]: skip-gram negative sampling and corruption-averaged
//!    document-context training.
//! 4. [`clustering`]: full-covariance Gaussian mixture, posteriors, and
//!    top-`l` sparsification of word-cluster assignments.
//! 5. [`composition`]: sparse word-topic vectors and document vectors.
//! 6. [`reduction`]: random projection, per-block PCA, autoencoder.
//! 7. [`classify`]: one-vs-rest linear models and evaluation metrics.
//!
//! [`pipeline`] wires the stages together with content-hash caching.

pub mod classify;
pub mod clustering;
pub mod composition;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod kmeans;
pub mod linalg;
pub mod pipeline;
pub mod reduction;
pub mod sense;
pub mod synth;

pub use error::{Error, Result};
