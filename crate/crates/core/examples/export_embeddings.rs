//! Precomputes reconstructed item embeddings once and scores impressions
//! from the table, as a serving system would.
//!
//! ```bash
//! cargo run --release --example export_embeddings
//! ```

use iv4rec::data::{gen_synthetic, EmbeddingTable, SyntheticConfig};
use iv4rec::iv::IvBuildConfig;
use iv4rec::models::ModelKind;
use iv4rec::recon::{reconstruct_table, Variant};
use iv4rec::train::{run_once, ExperimentData, RunSpec, TrainConfig};

fn main() -> iv4rec::Result<()> {
    let ds = gen_synthetic(&SyntheticConfig {
        num_users: 600,
        num_items: 300,
        num_queries: 900,
        seed: 8,
        ..SyntheticConfig::default()
    })?;
    let data = ExperimentData::from_synthetic(&ds, 10)?;
    let store = data.build_ivs(&IvBuildConfig::default())?;
    let spec = RunSpec {
        train: TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        },
        ..RunSpec::new(ModelKind::DinLite, Variant::Weighted)
    };
    let pipeline = run_once(&data, Some(&store), &spec)?.outcome.pipeline;

    let table = reconstruct_table(data.corpus.items(), Some(&store), &pipeline.recon, Variant::Weighted)?;
    let path = std::env::temp_dir().join("iv4rec-reconstructed.tsv");
    table.save(&path)?;
    let loaded = EmbeddingTable::load(&path)?;
    println!("{} embeddings of dim {} written to {}", loaded.len(), loaded.dim(), path.display());

    let projectors = data.corpus.projectors(&store, pipeline.recon.alpha_input)?;
    let inline = pipeline.predict_set(&data.corpus, Some(&projectors), &data.test)?;
    let offline = data.corpus.to_batch(&data.test).score(&pipeline.model, &loaded)?;
    let worst = inline.iter().zip(&offline).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("{} test scores, max |inline - table| = {worst:.2e}", inline.len());
    Ok(())
}
