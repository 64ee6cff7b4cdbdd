use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, Example, ExampleSet};
use super::metrics::{evaluate, ImpressionScores, MetricsReport};
use crate::error::{Error, Result};
use crate::models::{ModelConfig, ModelKind, UnderlyingModel};
use crate::numerics::{mlp::NoRng, sigmoid, ParamKind, Parameterized};
use crate::recon::{backward_item, forward_item, IvProjector, ReconConfig, ReconParams, Variant};

/// Lower clamp on predicted probabilities before taking logs.
pub const PROB_CLAMP: f64 = 1e-7;

/// Binary cross-entropy on a clamped probability.
pub fn bce(p: f64, label: bool) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Mean cross-entropy plus `lambda * squared_norm`.
pub fn loss(predictions: &[f64], labels: &[bool], squared_norm: f64, lambda: f64) -> f64 {
    assert_eq!(predictions.len(), labels.len());
    let ce: f64 = predictions.iter().zip(labels).map(|(&p, &c)| bce(p, c)).sum();
    ce / predictions.len().max(1) as f64 + lambda * squared_norm
}

/// Reconstruction plus underlying model, trained jointly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    pub variant: Variant,
    pub recon: ReconParams,
    pub model: UnderlyingModel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularization {
    pub lambda: f64,
    pub include_bias: bool,
}

/// Dropout keep probabilities per submodule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    pub recon_keep: f64,
    pub model_keep: f64,
}

impl Dropout {
    pub const OFF: Dropout = Dropout {
        recon_keep: 1.0,
        model_keep: 1.0,
    };
}

impl Pipeline {
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: Rng>(
        variant: Variant,
        kind: ModelKind,
        item_dim: usize,
        query_dim: usize,
        n: usize,
        context_dim: usize,
        recon_config: &ReconConfig,
        model_config: &ModelConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let recon = ReconParams::init(item_dim, query_dim, n, recon_config, rng)?;
        let model = UnderlyingModel::init(kind, variant.output_dim(query_dim), context_dim, model_config, rng)?;
        Ok(Pipeline { variant, recon, model })
    }

    fn projector<'a>(&self, projectors: Option<&'a [IvProjector]>, item: usize) -> Result<Option<&'a IvProjector>> {
        if !self.variant.needs_ivs() {
            return Ok(None);
        }
        projectors
            .map(|p| Some(&p[item]))
            .ok_or_else(|| Error::Config(format!("variant {} needs an IV store", self.variant)))
    }

    /// Reconstructed vectors for every item, dropout off.
    pub fn reconstruct_all(&self, corpus: &Corpus, projectors: Option<&[IvProjector]>) -> Result<Vec<Vec<f64>>> {
        (0..corpus.num_items())
            .map(|j| {
                let proj = self.projector(projectors, j)?;
                Ok(forward_item(&self.recon, corpus.item_vector(j), proj, self.variant, 1.0, &mut NoRng)?.output)
            })
            .collect()
    }

    fn score_with(&self, reps: &[Vec<f64>], corpus: &Corpus, e: &Example) -> Result<f64> {
        let history: Vec<&[f64]> = e.history.iter().map(|&h| reps[h].as_slice()).collect();
        self.model.score(&history, corpus.context(e.user), &reps[e.target])
    }

    /// Click probabilities for every example of `set`.
    pub fn predict_set(&self, corpus: &Corpus, projectors: Option<&[IvProjector]>, set: &ExampleSet) -> Result<Vec<f64>> {
        let reps = self.reconstruct_all(corpus, projectors)?;
        set.examples.iter().map(|e| self.score_with(&reps, corpus, e)).collect()
    }

    /// Predictions grouped by impression, in first-appearance order.
    pub fn impression_scores(
        &self,
        corpus: &Corpus,
        projectors: Option<&[IvProjector]>,
        set: &ExampleSet,
    ) -> Result<Vec<ImpressionScores>> {
        let scores = self.predict_set(corpus, projectors, set)?;
        let mut out: Vec<ImpressionScores> = set
            .impression_ids
            .iter()
            .map(|id| ImpressionScores {
                impression_id: id.clone(),
                item_ids: Vec::new(),
                scores: Vec::new(),
                labels: Vec::new(),
            })
            .collect();
        for (e, s) in set.examples.iter().zip(scores) {
            let imp = &mut out[e.impression];
            imp.item_ids.push(corpus.item_id(e.target).to_string());
            imp.scores.push(s);
            imp.labels.push(e.label);
        }
        Ok(out)
    }

    pub fn evaluate(&self, corpus: &Corpus, projectors: Option<&[IvProjector]>, set: &ExampleSet) -> Result<MetricsReport> {
        evaluate(&self.impression_scores(corpus, projectors, set)?)
    }

    /// Regularized mean cross-entropy over `batch` and its gradient.
    /// Each distinct item is reconstructed once per call.
    pub fn loss_and_grad<R: Rng>(
        &self,
        corpus: &Corpus,
        projectors: Option<&[IvProjector]>,
        batch: &[&Example],
        reg: Regularization,
        dropout: Dropout,
        rng: &mut R,
    ) -> Result<(f64, Pipeline)> {
        let mut slot: HashMap<usize, usize> = HashMap::new();
        let mut items = Vec::new();
        for e in batch {
            for &j in e.history.iter().chain(std::iter::once(&e.target)) {
                slot.entry(j).or_insert_with(|| {
                    items.push(j);
                    items.len() - 1
                });
            }
        }
        let forwards = items
            .iter()
            .map(|&j| {
                let proj = self.projector(projectors, j)?;
                forward_item(&self.recon, corpus.item_vector(j), proj, self.variant, dropout.recon_keep, rng)
            })
            .collect::<Result<Vec<_>>>()?;

        let mut grads = self.zeros_like();
        let mut d_items: Vec<Vec<f64>> = forwards.iter().map(|f| vec![0.0; f.output.len()]).collect();
        let scale = 1.0 / batch.len().max(1) as f64;
        let mut total = 0.0;
        for e in batch {
            let history: Vec<&[f64]> = e.history.iter().map(|h| forwards[slot[h]].output.as_slice()).collect();
            let target = &forwards[slot[&e.target]].output;
            let (logit, tape) = self.model.forward(&history, corpus.context(e.user), target, dropout.model_keep, rng)?;
            let p = sigmoid(logit);
            total += bce(p, e.label);
            let clamped = !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&p);
            let d_logit = if clamped { 0.0 } else { scale * (p - e.label as u8 as f64) };
            if d_logit == 0.0 {
                continue;
            }
            let (d_hist, d_target) = self.model.backward(&tape, d_logit, &mut grads.model);
            for (h, dh) in e.history.iter().zip(&d_hist) {
                d_items[slot[h]].iter_mut().zip(dh).for_each(|(a, b)| *a += b);
            }
            d_items[slot[&e.target]].iter_mut().zip(&d_target).for_each(|(a, b)| *a += b);
        }
        for (k, &j) in items.iter().enumerate() {
            let proj = self.projector(projectors, j)?;
            backward_item(&self.recon, &forwards[k], proj, self.variant, &d_items[k], &mut grads.recon);
        }
        grads.add_l2_gradient(self, reg.lambda, reg.include_bias);
        let value = total * scale + reg.lambda * self.squared_norm(reg.include_bias);
        Ok((value, grads))
    }
}

impl Parameterized for Pipeline {
    fn visit(&self, f: &mut dyn FnMut(ParamKind, &[f64])) {
        self.recon.visit(f);
        self.model.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(ParamKind, &mut [f64])) {
        self.recon.visit_mut(f);
        self.model.visit_mut(f);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_worked_examples() {
        assert!((loss(&[0.5, 0.5, 0.5], &[true, false, true], 0.0, 0.0) - 2f64.ln()).abs() < 1e-15);
        assert!((loss(&[0.8], &[true], 0.0, 0.0) - 0.223_143_551_314_209_7).abs() < 1e-15);
        assert_eq!(loss(&[0.8], &[true], 0.0, 1e3), loss(&[0.8], &[true], 0.0, 0.0));
    }

    #[test]
    fn clamping_keeps_loss_finite() {
        assert!(bce(0.0, true).is_finite());
        assert!(bce(1.0, false).is_finite());
        assert!((bce(0.0, true) + (PROB_CLAMP).ln()).abs() < 1e-12);
    }
}
