//! Offline ranking metrics: global AUC, GAUC, MRR and nDCG.
//!
//! ```bash
//! cargo run --example metrics
//! ```

use iv4rec::train::{auc, evaluate, ranking_metrics, ImpressionScores};

fn impression(id: &str, scores: &[f64], labels: &[bool]) -> ImpressionScores {
    ImpressionScores {
        impression_id: id.to_string(),
        item_ids: (0..scores.len()).map(|i| format!("{id}-n{i}")).collect(),
        scores: scores.to_vec(),
        labels: labels.to_vec(),
    }
}

fn main() -> iv4rec::Result<()> {
    println!("AUC with a tie: {:?}", auc(&[0.8, 0.8, 0.4, 0.2], &[true, false, true, false]));

    let ids: Vec<String> = (0..5).map(|i| format!("n{i}")).collect();
    let r = ranking_metrics(&ids, &[0.9, 0.8, 0.7, 0.6, 0.5], &[true, false, false, true, false], &[5, 10])
        .expect("has a click");
    println!("clicks at ranks 1 and 4: MRR {} nDCG@5 {:.4}", r.mrr, r.ndcg[0]);

    let report = evaluate(&[
        impression("a", &[0.9, 0.2, 0.4], &[true, false, false]),
        impression("b", &[0.1, 0.5, 0.3, 0.6], &[false, true, false, false]),
        impression("c", &[0.5, 0.5], &[false, false]),
    ])?;
    println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
    Ok(())
}
