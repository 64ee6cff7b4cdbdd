//! Verifies the hand-written backward pass of the whole pipeline against
//! central finite differences.
//!
//! ```bash
//! cargo run --release --example gradient_check
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use iv4rec::data::{gen_synthetic, SyntheticConfig};
use iv4rec::iv::IvBuildConfig;
use iv4rec::models::ModelKind;
use iv4rec::numerics::{grad_check, Parameterized};
use iv4rec::recon::{AlphaInput, Variant};
use iv4rec::train::{Dropout, ExperimentData, Pipeline, Regularization, RunSpec};

fn main() -> iv4rec::Result<()> {
    let ds = gen_synthetic(&SyntheticConfig {
        num_users: 60,
        num_items: 30,
        num_queries: 90,
        causal_dim: 6,
        confound_dim: 2,
        context_dim: 3,
        seed: 1,
        ..SyntheticConfig::default()
    })?;
    let data = ExperimentData::from_synthetic(&ds, 4)?;
    let store = data.build_ivs(&IvBuildConfig { n: 3, projection_seed: 0 })?;
    let projectors = data.corpus.projectors(&store, AlphaInput::MeanPool)?;
    let batch: Vec<_> = data.train.examples.iter().take(8).collect();
    let reg = Regularization {
        lambda: 1e-3,
        include_bias: false,
    };
    for model in [ModelKind::DinLite, ModelKind::NrhubLite] {
        for variant in Variant::ALL {
            let spec = RunSpec::new(model, variant);
            let p = spec.init_pipeline(&data.corpus, Some(&store))?;
            let proj = variant.needs_ivs().then_some(projectors.as_slice());
            let f = |q: &Pipeline| {
                let mut rng = ChaCha8Rng::seed_from_u64(0);
                q.loss_and_grad(&data.corpus, proj, &batch, reg, Dropout::OFF, &mut rng)
                    .expect("valid batch")
            };
            let err = grad_check(f, &p, 1e-5);
            println!("{model:<10} {variant:<14} {:>5} params  max rel err {err:.2e}", p.num_params());
        }
    }
    Ok(())
}
