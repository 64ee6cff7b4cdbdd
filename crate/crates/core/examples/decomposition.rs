//! Splits an item embedding into the part explained by its search queries
//! and the orthogonal remainder, then recombines them.
//!
//! ```bash
//! cargo run --example decomposition
//! ```

use iv4rec::data::{gen_synthetic, SyntheticConfig};
use iv4rec::iv::{build_iv_store, IvBuildConfig};
use iv4rec::numerics::{dot, norm};
use iv4rec::recon::{combine, compute_alphas, decompose, AlphaInput, ReconParams};

fn main() -> iv4rec::Result<()> {
    let cfg = SyntheticConfig {
        seed: 5,
        ..SyntheticConfig::default()
    };
    let ds = gen_synthetic(&cfg)?;
    let store = build_iv_store(&ds.items, &ds.search, &ds.queries, &IvBuildConfig::default())?;

    // identity MLP₀ and constant α = 1, the state before any training
    let params = ReconParams::identity(ds.items.dim(), store.n(), AlphaInput::MeanPool);
    let (id, t) = ds.items.iter().next().expect("items");
    let iv = store.require(id)?;
    let dec = decompose(t, iv, &params.mlp0)?;

    let causal = &dec.fitted[..cfg.causal_dim];
    let leaked = norm(&dec.fitted[cfg.causal_dim..]);
    println!("item {id}");
    println!("  |t| = {:.4}, |fitted| = {:.4}, |residual| = {:.4}", norm(t), norm(&dec.fitted), norm(&dec.residual));
    println!("  fitted . residual = {:.2e}", dot(&dec.fitted, &dec.residual));
    println!("  fitted mass in confounded block = {leaked:.2e} (causal block norm {:.4})", norm(causal));
    println!("  Z' residual = {:.2e}", norm(&iv.matrix.matvec_t(&dec.residual)));
    println!("  tau = {:?}", dec.tau.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>());

    let (a1, a2) = compute_alphas(t, iv, &params)?;
    let rec = combine(&dec, a1, a2);
    let gap = rec.vector.iter().zip(t).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("  alphas ({a1}, {a2}) give back t up to {gap:.1e}");

    let damped = combine(&dec, 1.0, 0.2);
    println!("  keeping 20% of the residual: |t'| = {:.4}", norm(&damped.vector));
    Ok(())
}
