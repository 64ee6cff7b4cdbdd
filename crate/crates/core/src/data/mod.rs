//! Interaction logs, embedding tables, the hashing text embedder, the
//! synthetic data generator and chronological splitting.

mod embedding;
mod hashing;
mod logs;
mod split;
pub mod synthetic;

pub use embedding::{EmbeddingKind, EmbeddingTable};
pub(crate) use embedding::write_values;
pub use hashing::{hash_embed, news_query, tokenize, HashEmbedder};
pub use logs::{
    load_rec_log, load_search_log, parse_rec_log, parse_search_log, save_rec_log, save_search_log,
    sort_rec, sort_search, write_rec_log, write_search_log, LogKind, RecInteraction,
    SearchInteraction, REC_HEADER, SEARCH_HEADER,
};
pub use split::{chronological_split, Split};
pub use synthetic::{gen_synthetic, GroundTruth, SyntheticConfig, SyntheticDataset};
