//! Search queries as instrumental variables for recommender item embeddings.
//!
//! Item embeddings are lifted by a small network, projected onto the column
//! space of the item's query embeddings, and split into a fitted part and a
//! residual. The two parts are recombined with learned per-item weights and
//! fed to an ordinary underlying recommender, trained end to end on clicks.
//!
//! Module map:
//!
//! - [`numerics`]: SVD, pseudoinverse, MLPs with backward passes, Adam.
//! - [`data`]: log and embedding-table formats, the hashing text embedder,
//!   the synthetic confounded-data generator, chronological splits.
//! - [`iv`]: per-item query ranking, backfill, IV matrices, treatment sets.
//! - [`recon`]: decomposition, combination weights, table reconstruction.
//! - [`models`]: DIN-lite and NRHUB-lite underlying models.
//! - [`train`]: loss, training loop, metrics, ablation and IV-quality runners.
//! - [`cli`]: the `iv4rec` command line.

pub mod cli;
pub mod data;
pub mod error;
pub mod iv;
pub mod models;
pub mod numerics;
pub mod recon;
pub mod train;

pub use error::{Error, Result};
