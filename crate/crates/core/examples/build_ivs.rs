//! Builds per-item instrument matrices from a search log: clicked queries
//! first, then nearest queries by cosine similarity as backfill.
//!
//! ```bash
//! cargo run --example build_ivs
//! ```

use iv4rec::data::{gen_synthetic, SyntheticConfig};
use iv4rec::iv::{build_iv_store, IvBuildConfig, QuerySource};

fn main() -> iv4rec::Result<()> {
    let ds = gen_synthetic(&SyntheticConfig {
        seed: 3,
        ..SyntheticConfig::default()
    })?;
    for n in [1, 3, 10] {
        let store = build_iv_store(&ds.items, &ds.search, &ds.queries, &IvBuildConfig { n, projection_seed: 0 })?;
        let s = store.stats();
        println!(
            "N={n:>2}: {} items, clicked {}, backfill {}, padding {}",
            s.items, s.clicked_columns, s.backfill_columns, s.padding_columns
        );
    }

    let store = build_iv_store(&ds.items, &ds.search, &ds.queries, &IvBuildConfig::default())?;
    let iv = store.iter().next().expect("non-empty store");
    println!("\nitem {} uses Z of shape {}x{}:", iv.item_id, iv.query_dim(), iv.n());
    for col in &iv.columns {
        let tag = match col.source {
            QuerySource::Clicked => format!("clicked x{}", col.click_count),
            other => other.to_string(),
        };
        println!("  {:<10} {}", col.query_id.as_deref().unwrap_or("-"), tag);
    }

    let path = std::env::temp_dir().join("iv4rec-example-ivs.tsv");
    store.save(&path)?;
    println!("\nsaved store to {}", path.display());
    Ok(())
}
