//! Trains DIN-lite with and without query-based reconstruction on a
//! synthetic dataset, then saves the reconstructed model as a checkpoint.
//!
//! ```bash
//! cargo run --release --example train_din
//! ```

use iv4rec::data::{gen_synthetic, SyntheticConfig};
use iv4rec::iv::IvBuildConfig;
use iv4rec::models::ModelKind;
use iv4rec::recon::Variant;
use iv4rec::train::{run_once, Checkpoint, ExperimentData, RunSpec, TrainConfig};

fn main() -> iv4rec::Result<()> {
    let ds = gen_synthetic(&SyntheticConfig {
        num_users: 1500,
        num_items: 600,
        num_queries: 1800,
        seed: 1,
        ..SyntheticConfig::default()
    })?;
    let data = ExperimentData::from_synthetic(&ds, 10)?;
    let store = data.build_ivs(&IvBuildConfig::default())?;
    println!(
        "train {} / val {} / test {} examples",
        data.train.len(),
        data.val.len(),
        data.test.len()
    );

    let train = TrainConfig {
        epochs: 6,
        learning_rate: 1e-3,
        ..TrainConfig::default()
    };
    let mut last = None;
    for variant in [Variant::Original, Variant::Weighted] {
        let spec = RunSpec {
            train: train.clone(),
            ..RunSpec::new(ModelKind::DinLite, variant)
        };
        let r = run_once(&data, Some(&store), &spec)?;
        println!("\n{variant}:");
        for e in &r.outcome.curve {
            println!("  epoch {} loss {:.4} val AUC {:.4}", e.epoch, e.train_loss, e.val_auc.unwrap_or(f64::NAN));
        }
        println!(
            "  test AUC {:.4} GAUC {:.4} MRR {:.4} nDCG@5 {:.4}",
            r.test.auc,
            r.test.gauc.unwrap_or(f64::NAN),
            r.test.mrr,
            r.test.ndcg5
        );
        last = Some(r.outcome.pipeline);
    }

    let path = std::env::temp_dir().join("iv4rec-din-weighted.json");
    Checkpoint::new(last.expect("trained"), train, Some(store.n())).save(&path)?;
    println!("\ncheckpoint written to {}", path.display());
    Ok(())
}
