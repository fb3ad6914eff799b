//! Online time-series anomaly detection with a dynamic pool of lightweight
//! detectors.
//!
//! Each incoming batch is scored by every model in the pool, the score
//! vectors are turned into a weighted model graph (Spearman correlation
//! edges), the graph is partitioned into communities, and one representative
//! per community is ensembled into the final anomaly score. Concept drift is
//! detected from structural change between consecutive graphs (centrality
//! ranking + community membership) and triggers a pool rebuild; stable
//! batches only retrain the representatives.
//!
//! Entry point for whole-stream runs is [`pipeline::run`]; the individual
//! stages are usable on their own.

pub mod community;
pub mod detectors;
pub mod drift;
pub mod ensemble;
pub mod error;
pub mod graph;
pub mod pipeline;
pub mod pool;
pub mod stats;
pub mod stream;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Identifier of one concrete model instance in the pool.
///
/// Ids are allocated by a [`detectors::ModelFactory`] and never reused
/// within a run, so a pruned model's id cannot come back.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct ModelId(pub u64);

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}
