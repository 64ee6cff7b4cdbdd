//! Training, evaluation metrics and experiment runners.

mod checkpoint;
mod corpus;
pub mod experiment;
mod metrics;
mod pipeline;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use corpus::{Corpus, Example, ExampleSet};
pub use experiment::{
    run_ablation, run_iv_quality_sweep, run_once, substitute_random_queries, ExperimentData, ResultRow, ResultTable,
    RunResult, RunSpec, SweepMode, METRICS_HEADER,
};
pub use metrics::{auc, evaluate, ranking_metrics, spearman, ImpressionScores, MetricsReport, RankingMetrics};
pub use pipeline::{bce, loss, Dropout, Pipeline, Regularization, PROB_CLAMP};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{AdamState, Parameterized};
use crate::recon::IvProjector;

pub const LEARNING_RATE_GRID: [f64; 5] = [1e-4, 3e-4, 5e-4, 7e-4, 1e-3];
pub const DROPOUT_KEEP_GRID: [f64; 3] = [0.5, 0.9, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Keep probability inside the underlying model.
    pub dropout_keep: f64,
    /// Keep probability inside the reconstruction networks.
    pub recon_dropout_keep: f64,
    pub lambda: f64,
    pub l2_include_bias: bool,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    /// Epochs without validation-AUC improvement before stopping.
    pub patience: usize,
    pub max_history: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            dropout_keep: 1.0,
            recon_dropout_keep: 1.0,
            lambda: 1e-6,
            l2_include_bias: false,
            batch_size: 64,
            epochs: 10,
            seed: 0,
            patience: 3,
            max_history: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let keep_ok = |k: f64| k > 0.0 && k <= 1.0;
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be positive, got {}", self.learning_rate)));
        }
        if !keep_ok(self.dropout_keep) || !keep_ok(self.recon_dropout_keep) {
            return Err(Error::Config("dropout keep probabilities must be in (0, 1]".into()));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be >= 0, got {}", self.lambda)));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch_size and epochs must be >= 1".into()));
        }
        Ok(())
    }

    pub fn regularization(&self) -> Regularization {
        Regularization {
            lambda: self.lambda,
            include_bias: self.l2_include_bias,
        }
    }

    pub fn dropout(&self) -> Dropout {
        Dropout {
            recon_keep: self.recon_dropout_keep,
            model_keep: self.dropout_keep,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation parameters (last epoch when there is no validation set).
    pub pipeline: Pipeline,
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
    /// Set when training stopped on a non-finite loss; `pipeline` then
    /// holds the last good parameters.
    pub diverged: Option<String>,
}

/// Adam on the regularized cross-entropy over `train`, one seeded shuffle
/// per epoch, early stopping on validation AUC.
pub fn train(
    config: &TrainConfig,
    corpus: &Corpus,
    projectors: Option<&[IvProjector]>,
    train_set: &ExampleSet,
    val_set: Option<&ExampleSet>,
    init: Pipeline,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let mut params = init;
    let mut adam = AdamState::new(params.num_params(), config.learning_rate);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut curve = Vec::new();
    let mut best = params.clone();
    let mut best_auc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;
    let val_set = val_set.filter(|v| !v.is_empty());

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Example> = chunk.iter().map(|&i| &train_set.examples[i]).collect();
            let (value, grads) = params.loss_and_grad(
                corpus,
                projectors,
                &batch,
                config.regularization(),
                config.dropout(),
                &mut rng,
            )?;
            if !value.is_finite() || !grads.all_finite() {
                let message = format!("non-finite loss or gradient in epoch {epoch}; returning last good parameters");
                log::error!("{message}");
                return Ok(TrainOutcome {
                    pipeline: if best_epoch > 0 { best } else { params },
                    curve,
                    best_epoch,
                    diverged: Some(message),
                });
            }
            total += value * batch.len() as f64;
            adam.update(&mut params, &grads)?;
        }
        let train_loss = total / train_set.len() as f64;
        let val_auc = match val_set {
            Some(v) => params.evaluate(corpus, projectors, v).ok().map(|r| r.auc),
            None => None,
        };
        log::info!(
            "epoch {epoch}: train loss {train_loss:.5}{}",
            val_auc.map(|a| format!(", val AUC {a:.5}")).unwrap_or_default()
        );
        curve.push(EpochRecord {
            epoch,
            train_loss,
            val_auc,
        });
        match val_auc {
            Some(a) if a > best_auc => {
                best_auc = a;
                best = params.clone();
                best_epoch = epoch;
                stale = 0;
            }
            Some(_) => {
                stale += 1;
                if stale >= config.patience {
                    log::info!("early stop after epoch {epoch}; best epoch {best_epoch}");
                    break;
                }
            }
            None => {
                best = params.clone();
                best_epoch = epoch;
            }
        }
    }
    Ok(TrainOutcome {
        pipeline: best,
        curve,
        best_epoch,
        diverged: None,
    })
}
