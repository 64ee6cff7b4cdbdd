//! Generates a small confounded dataset and writes it as TSV files.
//!
//! ```bash
//! cargo run --example synthetic_data -- /tmp/iv4rec-synth
//! ```

use std::path::PathBuf;

use iv4rec::data::{gen_synthetic, SyntheticConfig};

fn main() -> iv4rec::Result<()> {
    let out: PathBuf = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        std::env::temp_dir().join("iv4rec-synth")
    });
    let cfg = SyntheticConfig {
        num_users: 300,
        num_items: 120,
        num_queries: 360,
        confounder_strength: 1.5,
        seed: 42,
        ..SyntheticConfig::default()
    };
    let ds = gen_synthetic(&cfg)?;
    let clicks = ds.rec.iter().filter(|r| r.click).count();
    println!(
        "{} impressions rows, CTR {:.3}, {} search rows, item dim {} ({} causal + {} confounded)",
        ds.rec.len(),
        clicks as f64 / ds.rec.len() as f64,
        ds.search.len(),
        ds.items.dim(),
        cfg.causal_dim,
        cfg.confound_dim
    );

    // queries carry no confounder coordinates
    let (_, q) = ds.queries.iter().next().expect("queries generated");
    println!("first query, confounded block: {:?}", &q[cfg.causal_dim..]);

    for path in ds.write_to_dir(&out)? {
        println!("wrote {}", path.display());
    }
    Ok(())
}
