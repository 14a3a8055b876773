//! Language genealogy from clip embeddings.
//!
//! Per-language centroids of clip embeddings are clustered with Ward linkage,
//! the tree is scored against known families, its clades are bootstrapped
//! over clips, and embedding dimensions that separate a target group are
//! traced to interpretable acoustic features.
//!
//! Heavy loops (bootstrap replicates, per-dimension tests, per-clip feature
//! extraction) take an [`Execution`] and run on rayon when the `parallel`
//! feature is enabled. Results do not depend on the strategy or thread count.

pub mod acoustics;
pub mod boot;
pub mod centroid;
pub mod cluster;
pub mod corpus;
pub mod error;
pub mod exec;
pub mod metrics;
pub mod newick;
pub mod projection;
pub mod render;
pub mod special;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
pub use exec::{with_threads, Execution};
