//! Compares the five reconstruction variants under shared seeds.
//!
//! ```bash
//! cargo run --release --example ablation
//! ```

use iv4rec::data::{gen_synthetic, SyntheticConfig};
use iv4rec::iv::IvBuildConfig;
use iv4rec::models::ModelKind;
use iv4rec::recon::Variant;
use iv4rec::train::{run_ablation, ExperimentData, RunSpec, TrainConfig};

fn main() -> iv4rec::Result<()> {
    let ds = gen_synthetic(&SyntheticConfig {
        num_users: 1000,
        num_items: 400,
        num_queries: 1200,
        seed: 2,
        ..SyntheticConfig::default()
    })?;
    let data = ExperimentData::from_synthetic(&ds, 10)?;
    let store = data.build_ivs(&IvBuildConfig::default())?;
    let base = RunSpec {
        train: TrainConfig {
            epochs: 4,
            ..TrainConfig::default()
        },
        ..RunSpec::new(ModelKind::NrhubLite, Variant::Weighted)
    };
    let table = run_ablation(&data, Some(&store), &base, &Variant::ALL, &[0, 1]);
    table.write_tsv(std::io::stdout()).expect("stdout");
    println!();
    for label in table.labels() {
        if let Some((mean, sd, n)) = table.auc_summary(label) {
            println!("{label:<14} AUC {mean:.4} +/- {sd:.4} over {n} seeds");
        }
    }
    Ok(())
}
