//! Underlying recommenders fed by (reconstructed) item embeddings.
//!
//! Both models build a user vector `u = Σ_k w_k h_k + W_ctx p_u` from
//! softmax attention over the click history `h_1..h_n`; an empty history
//! falls back to `W_ctx p_u + d` with a learned default `d`.
//!
//! * DIN-lite scores `h_k` with an MLP over `[h_k, t, h_k ⊙ t, h_k - t]` and
//!   predicts `sigmoid(MLP([u, t, u ⊙ t]))`.
//! * NRHUB-lite scores `h_k` with `wᵀ tanh(W h_k + b)` regardless of the
//!   target and predicts `sigmoid(⟨u, t⟩)`.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::EmbeddingTable;
use crate::error::{Error, Result};
use crate::iv::TreatmentSet;
use crate::numerics::{axpy, dot, sigmoid, Activation, Matrix, MlpParams, MlpTape, ParamKind, Parameterized};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    DinLite,
    NrhubLite,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            ModelKind::DinLite => "din_lite",
            ModelKind::NrhubLite => "nrhub_lite",
        })
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "din_lite" => Ok(ModelKind::DinLite),
            "nrhub_lite" => Ok(ModelKind::NrhubLite),
            _ => Err(format!("unknown model `{s}` (expected din_lite or nrhub_lite)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub attention_hidden: usize,
    /// Hidden widths of the DIN-lite prediction head.
    pub head_hidden: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            attention_hidden: 8,
            head_hidden: vec![16],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnderlyingModel {
    pub kind: ModelKind,
    /// Item and user vector dimension.
    pub dim: usize,
    pub attention: MlpParams,
    pub head: Option<MlpParams>,
    /// `dim x context_dim`
    pub w_ctx: Matrix,
    pub default_user: Vec<f64>,
}

impl UnderlyingModel {
    /// Attention networks have no output bias: softmax ignores a shared
    /// shift, so such a bias would be inert.
    pub fn init<R: Rng>(kind: ModelKind, dim: usize, context_dim: usize, config: &ModelConfig, rng: &mut R) -> Result<Self> {
        if dim == 0 {
            return Err(Error::contract("model dim must be >= 1"));
        }
        let h = config.attention_hidden;
        let (attention, head) = match kind {
            ModelKind::DinLite => {
                let attention = MlpParams::init(&[4 * dim, h, 1], &[Activation::Relu, Activation::Identity], rng)?;
                let mut dims = vec![3 * dim];
                dims.extend(&config.head_hidden);
                dims.push(1);
                let mut acts = vec![Activation::Relu; dims.len() - 2];
                acts.push(Activation::Identity);
                (attention, Some(MlpParams::init(&dims, &acts, rng)?))
            }
            ModelKind::NrhubLite => (
                MlpParams::init(&[dim, h, 1], &[Activation::Tanh, Activation::Identity], rng)?,
                None,
            ),
        };
        let scale = 1.0 / (context_dim.max(1) as f64).sqrt();
        let w = (0..dim * context_dim)
            .map(|_| {
                let z: f64 = StandardNormal.sample(rng);
                0.1 * scale * z
            })
            .collect();
        Ok(UnderlyingModel {
            kind,
            dim,
            attention: attention.without_output_bias(),
            head,
            w_ctx: Matrix::from_vec(dim, context_dim, w)?,
            default_user: vec![0.0; dim],
        })
    }

    pub fn context_dim(&self) -> usize {
        self.w_ctx.cols()
    }

    fn check(&self, history: &[&[f64]], context: &[f64], target: &[f64]) -> Result<()> {
        if target.len() != self.dim || history.iter().any(|h| h.len() != self.dim) {
            return Err(Error::contract(format!("{} expects item vectors of dim {}", self.kind, self.dim)));
        }
        if context.len() != self.context_dim() {
            return Err(Error::contract(format!(
                "{} expects context of dim {}, got {}",
                self.kind,
                self.context_dim(),
                context.len()
            )));
        }
        Ok(())
    }

    fn attention_input(&self, h: &[f64], t: &[f64]) -> Vec<f64> {
        match self.kind {
            ModelKind::DinLite => {
                let mut x = Vec::with_capacity(4 * self.dim);
                x.extend_from_slice(h);
                x.extend_from_slice(t);
                x.extend(h.iter().zip(t).map(|(a, b)| a * b));
                x.extend(h.iter().zip(t).map(|(a, b)| a - b));
                x
            }
            ModelKind::NrhubLite => h.to_vec(),
        }
    }

    /// Softmax attention over a non-empty history.
    pub fn attention_weights(&self, history: &[&[f64]], target: &[f64]) -> Result<Vec<f64>> {
        if history.is_empty() {
            return Err(Error::contract("attention needs a non-empty history"));
        }
        let scores = history
            .iter()
            .map(|h| Ok(self.attention.infer(&self.attention_input(h, target))?[0]))
            .collect::<Result<Vec<f64>>>()?;
        Ok(softmax(&scores))
    }

    pub fn user_repr(&self, history: &[&[f64]], context: &[f64], target: &[f64]) -> Result<Vec<f64>> {
        self.check(history, context, target)?;
        let mut u = self.w_ctx.matvec(context);
        if history.is_empty() {
            axpy(1.0, &self.default_user, &mut u);
        } else {
            let w = self.attention_weights(history, target)?;
            for (wk, h) in w.iter().zip(history) {
                axpy(*wk, h, &mut u);
            }
        }
        Ok(u)
    }

    fn head_input(u: &[f64], t: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(3 * u.len());
        x.extend_from_slice(u);
        x.extend_from_slice(t);
        x.extend(u.iter().zip(t).map(|(a, b)| a * b));
        x
    }

    fn logit(&self, u: &[f64], t: &[f64]) -> Result<f64> {
        match &self.head {
            Some(head) => Ok(head.infer(&Self::head_input(u, t))?[0]),
            None => Ok(dot(u, t)),
        }
    }

    pub fn predict(&self, u: &[f64], t: &[f64]) -> Result<f64> {
        if u.len() != self.dim || t.len() != self.dim {
            return Err(Error::contract(format!("{} expects vectors of dim {}", self.kind, self.dim)));
        }
        Ok(sigmoid(self.logit(u, t)?))
    }

    /// Click probability for one (history, context, target) triple.
    pub fn score(&self, history: &[&[f64]], context: &[f64], target: &[f64]) -> Result<f64> {
        let u = self.user_repr(history, context, target)?;
        self.predict(&u, target)
    }

    /// Forward pass keeping what [`UnderlyingModel::backward`] needs.
    /// Returns the logit.
    pub fn forward<R: Rng>(
        &self,
        history: &[&[f64]],
        context: &[f64],
        target: &[f64],
        keep: f64,
        rng: &mut R,
    ) -> Result<(f64, ModelTape)> {
        self.check(history, context, target)?;
        let mut attn_tapes = Vec::with_capacity(history.len());
        let mut scores = Vec::with_capacity(history.len());
        for h in history {
            let (s, tape) = self.attention.forward(&self.attention_input(h, target), keep, rng)?;
            scores.push(s[0]);
            attn_tapes.push(tape);
        }
        let weights = softmax(&scores);
        let mut u = self.w_ctx.matvec(context);
        if history.is_empty() {
            axpy(1.0, &self.default_user, &mut u);
        }
        for (wk, h) in weights.iter().zip(history) {
            axpy(*wk, h, &mut u);
        }
        let (logit, head_tape) = match &self.head {
            Some(head) => {
                let (y, tape) = head.forward(&Self::head_input(&u, target), keep, rng)?;
                (y[0], Some(tape))
            }
            None => (dot(&u, target), None),
        };
        Ok((
            logit,
            ModelTape {
                history: history.iter().map(|h| h.to_vec()).collect(),
                context: context.to_vec(),
                target: target.to_vec(),
                attn_tapes,
                weights,
                user: u,
                head_tape,
            },
        ))
    }

    /// Back-propagates `d_logit`, accumulating into `grads`. Returns the
    /// gradients with respect to each history vector and the target.
    pub fn backward(&self, tape: &ModelTape, d_logit: f64, grads: &mut UnderlyingModel) -> (Vec<Vec<f64>>, Vec<f64>) {
        let d = self.dim;
        let t = &tape.target;
        let u = &tape.user;
        let (d_u, mut d_t) = match (&self.head, &tape.head_tape) {
            (Some(head), Some(ht)) => {
                let dx = head.backward(ht, &[d_logit], grads.head.as_mut().expect("same shape"));
                let mut du = dx[..d].to_vec();
                let mut dt = dx[d..2 * d].to_vec();
                for k in 0..d {
                    du[k] += dx[2 * d + k] * t[k];
                    dt[k] += dx[2 * d + k] * u[k];
                }
                (du, dt)
            }
            _ => (t.iter().map(|x| d_logit * x).collect(), u.iter().map(|x| d_logit * x).collect()),
        };
        grads.w_ctx.add_outer(1.0, &d_u, &tape.context);
        if tape.history.is_empty() {
            axpy(1.0, &d_u, &mut grads.default_user);
            return (Vec::new(), d_t);
        }
        let w = &tape.weights;
        let d_w: Vec<f64> = tape.history.iter().map(|h| dot(&d_u, h)).collect();
        let mean: f64 = w.iter().zip(&d_w).map(|(a, b)| a * b).sum();
        let mut d_hist = Vec::with_capacity(tape.history.len());
        for (k, h) in tape.history.iter().enumerate() {
            let d_score = w[k] * (d_w[k] - mean);
            let dx = self.attention.backward(&tape.attn_tapes[k], &[d_score], &mut grads.attention);
            let mut dh: Vec<f64> = d_u.iter().map(|g| w[k] * g).collect();
            match self.kind {
                ModelKind::DinLite => {
                    for i in 0..d {
                        let prod = dx[2 * d + i];
                        let diff = dx[3 * d + i];
                        dh[i] += dx[i] + prod * t[i] + diff;
                        d_t[i] += dx[d + i] + prod * h[i] - diff;
                    }
                }
                ModelKind::NrhubLite => axpy(1.0, &dx, &mut dh),
            }
            d_hist.push(dh);
        }
        (d_hist, d_t)
    }
}

#[derive(Debug, Clone)]
pub struct ModelTape {
    history: Vec<Vec<f64>>,
    context: Vec<f64>,
    target: Vec<f64>,
    attn_tapes: Vec<MlpTape>,
    weights: Vec<f64>,
    user: Vec<f64>,
    head_tape: Option<MlpTape>,
}

impl ModelTape {
    pub fn attention_weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn user_vector(&self) -> &[f64] {
        &self.user
    }
}

impl Parameterized for UnderlyingModel {
    fn visit(&self, f: &mut dyn FnMut(ParamKind, &[f64])) {
        self.attention.visit(f);
        if let Some(h) = &self.head {
            h.visit(f);
        }
        f(ParamKind::Weight, self.w_ctx.as_slice());
        f(ParamKind::Bias, &self.default_user);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(ParamKind, &mut [f64])) {
        self.attention.visit_mut(f);
        if let Some(h) = &mut self.head {
            h.visit_mut(f);
        }
        f(ParamKind::Weight, self.w_ctx.as_mut_slice());
        f(ParamKind::Bias, &mut self.default_user);
    }
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// One labelled prediction request.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchExample {
    pub treatment: TreatmentSet,
    pub context: Vec<f64>,
    pub label: bool,
    pub impression_id: String,
}

/// Labelled requests scored against a table of item vectors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImpressionBatch {
    pub examples: Vec<BatchExample>,
}

impl ImpressionBatch {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Click probabilities with item vectors looked up in `items`.
    pub fn score(&self, model: &UnderlyingModel, items: &EmbeddingTable) -> Result<Vec<f64>> {
        self.examples
            .iter()
            .map(|ex| {
                let history = ex
                    .treatment
                    .history
                    .iter()
                    .map(|id| items.require(id))
                    .collect::<Result<Vec<&[f64]>>>()?;
                let target = items.require(&ex.treatment.target_item_id)?;
                model.score(&history, &ex.context, target)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(kind: ModelKind, seed: u64) -> UnderlyingModel {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        UnderlyingModel::init(kind, 3, 2, &ModelConfig::default(), &mut rng).unwrap()
    }

    #[test]
    fn identical_history_gives_uniform_weights() {
        for kind in [ModelKind::DinLite, ModelKind::NrhubLite] {
            let m = model(kind, 1);
            let h = [0.3, -0.2, 0.9];
            let w = m.attention_weights(&[&h, &h, &h, &h], &[1.0, 0.0, 0.5]).unwrap();
            assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-15));
            assert_eq!(m.attention_weights(&[&h], &[1.0, 0.0, 0.5]).unwrap(), vec![1.0]);
            assert!(m.attention_weights(&[], &h).is_err());
        }
    }

    #[test]
    fn user_repr_degenerate_cases() {
        let mut m = model(ModelKind::DinLite, 2);
        let h = [0.3, -0.2, 0.9];
        let u = m.user_repr(&[&h, &h], &[0.0, 0.0], &[1.0, 1.0, 1.0]).unwrap();
        for (a, b) in u.iter().zip(&h) {
            assert!((a - b).abs() < 1e-15);
        }
        m.default_user = vec![0.5, 0.25, -1.0];
        assert_eq!(m.user_repr(&[], &[0.0, 0.0], &h).unwrap(), m.default_user);
    }

    #[test]
    fn nrhub_inner_product_head() {
        let m = model(ModelKind::NrhubLite, 3);
        assert_eq!(m.predict(&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]).unwrap(), 0.5);
        let p = m.predict(&[0.0, 1.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!((p - 0.731_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn forward_matches_score() {
        for kind in [ModelKind::DinLite, ModelKind::NrhubLite] {
            let m = model(kind, 5);
            let (a, b, t) = ([0.1, 0.2, -0.3], [1.0, -0.5, 0.0], [0.4, 0.4, 0.1]);
            let (logit, tape) = m.forward_eval_for_test(&[&a, &b], &[0.3, -1.0], &t);
            let p = m.score(&[&a, &b], &[0.3, -1.0], &t).unwrap();
            assert!((sigmoid(logit) - p).abs() < 1e-15);
            assert!((tape.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_contract_error() {
        let m = model(ModelKind::NrhubLite, 4);
        assert!(m.score(&[&[1.0, 2.0]], &[0.0, 0.0], &[1.0, 0.0, 0.0]).is_err());
        assert!(m.score(&[], &[0.0], &[1.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn names_round_trip() {
        for k in [ModelKind::DinLite, ModelKind::NrhubLite] {
            assert_eq!(k.to_string().parse::<ModelKind>().unwrap(), k);
        }
    }

    impl UnderlyingModel {
        fn forward_eval_for_test(&self, h: &[&[f64]], c: &[f64], t: &[f64]) -> (f64, ModelTape) {
            self.forward(h, c, t, 1.0, &mut crate::numerics::mlp::NoRng).unwrap()
        }
    }
}
