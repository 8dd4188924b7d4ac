//! Expertise ranking engine for matching manuscripts to candidate reviewers.
//!
//! The pipeline runs in stages, each backed by a module here:
//!
//! 1. [`corpus`] — ingest paper/author metadata, resolve author identities,
//!    build the co-authorship graph.
//! 2. [`clients`] — embedding and keyword-extraction backends (HTTP or
//!    deterministic in-repo stubs, so everything runs offline).
//! 3. [`profile`] — frequency-preserving keyword profiles per reviewer and
//!    their linearized text form.
//! 4. [`lexical`] — BM25 index used both as the weak-supervision signal and
//!    as a retrieval baseline, plus a TF-IDF cosine baseline.
//! 5. [`dense`] — embedding store with exact cosine search, threshold recall
//!    and pooling aggregators for baseline scoring.
//! 6. [`coi`] — conflict-of-interest filtering of candidate pools.
//! 7. [`prefgen`] — annotation-free preference triplets derived from BM25
//!    rankings.
//! 8. [`train`] — low-rank residual adapter over frozen embeddings, trained
//!    with a pairwise + contrastive objective by in-house gradient descent.
//! 9. [`eval`] — benchmark loading, preference-pair derivation, ranking loss
//!    and precision.

pub mod clients;
pub mod coi;
pub mod corpus;
pub mod dense;
pub mod error;
pub mod eval;
pub mod lexical;
pub mod prefgen;
pub mod profile;
pub mod train;

pub use error::{Error, Result};
