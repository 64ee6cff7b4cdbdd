//! Small fully connected networks with an explicit forward tape.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::{axpy, Matrix};
use super::params::{ParamKind, Parameterized};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out x in`
    pub weight: Matrix,
    pub bias: Option<Vec<f64>>,
    pub activation: Activation,
}

impl Layer {
    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layers: Vec<Layer>,
}

/// Per-layer record of one forward pass.
#[derive(Debug, Clone)]
struct LayerTape {
    input: Vec<f64>,
    pre: Vec<f64>,
    post: Vec<f64>,
    /// Inverted-dropout multipliers applied on top of `post`.
    mask: Option<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct MlpTape {
    layers: Vec<LayerTape>,
}

impl MlpParams {
    /// Glorot-uniform weights and zero biases. `dims` has one more entry
    /// than `activations`.
    pub fn init<R: Rng>(dims: &[usize], activations: &[Activation], rng: &mut R) -> Result<Self> {
        if dims.len() != activations.len() + 1 || activations.is_empty() {
            return Err(Error::contract("mlp needs dims.len() == activations.len() + 1 >= 2"));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::contract("mlp layer dims must be >= 1"));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &activation)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                Layer {
                    weight: Matrix::from_vec(fan_out, fan_in, data).expect("sized"),
                    bias: Some(vec![0.0; fan_out]),
                    activation,
                }
            })
            .collect();
        Ok(MlpParams { layers })
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::contract("mlp needs at least one layer"));
        }
        for (k, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::contract(format!(
                    "layer {k} outputs {} but layer {} expects {}",
                    pair[0].output_dim(),
                    k + 1,
                    pair[1].input_dim()
                )));
            }
        }
        for l in &layers {
            if let Some(b) = &l.bias {
                if b.len() != l.output_dim() {
                    return Err(Error::contract("bias length must equal layer output dim"));
                }
            }
        }
        Ok(MlpParams { layers })
    }

    pub fn identity(dim: usize) -> Self {
        MlpParams {
            layers: vec![Layer {
                weight: Matrix::identity(dim),
                bias: Some(vec![0.0; dim]),
                activation: Activation::Identity,
            }],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    /// Drops the bias of the final layer. Used where a constant output
    /// shift cancels downstream (softmax scores), which would otherwise
    /// leave a parameter with an identically zero gradient.
    pub fn without_output_bias(mut self) -> Self {
        if let Some(l) = self.layers.last_mut() {
            l.bias = None;
        }
        self
    }

    pub fn zero_output_layer(mut self) -> Self {
        if let Some(l) = self.layers.last_mut() {
            l.weight.as_mut_slice().iter_mut().for_each(|w| *w = 0.0);
            if let Some(b) = &mut l.bias {
                b.iter_mut().for_each(|x| *x = 0.0);
            }
        }
        self
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::contract(format!(
                "mlp expects input of length {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Inference pass (no dropout, no tape).
    pub fn infer(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut h = x.to_vec();
        for l in &self.layers {
            let mut z = l.weight.matvec(&h);
            if let Some(b) = &l.bias {
                axpy(1.0, b, &mut z);
            }
            z.iter_mut().for_each(|v| *v = l.activation.apply(*v));
            h = z;
        }
        Ok(h)
    }

    /// Forward pass recording a tape. With `keep < 1` inverted dropout is
    /// applied to every hidden layer's output; the final layer is never
    /// dropped.
    pub fn forward<R: Rng>(&self, x: &[f64], keep: f64, rng: &mut R) -> Result<(Vec<f64>, MlpTape)> {
        if !(keep > 0.0 && keep <= 1.0) {
            return Err(Error::contract(format!("dropout keep must be in (0,1], got {keep}")));
        }
        self.check_input(x)?;
        let n = self.layers.len();
        let mut tapes = Vec::with_capacity(n);
        let mut h = x.to_vec();
        for (k, l) in self.layers.iter().enumerate() {
            let mut pre = l.weight.matvec(&h);
            if let Some(b) = &l.bias {
                axpy(1.0, b, &mut pre);
            }
            let post: Vec<f64> = pre.iter().map(|&z| l.activation.apply(z)).collect();
            let mask = if keep < 1.0 && k + 1 < n {
                Some(
                    (0..post.len())
                        .map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 })
                        .collect::<Vec<f64>>(),
                )
            } else {
                None
            };
            let out = match &mask {
                Some(m) => post.iter().zip(m).map(|(a, m)| a * m).collect(),
                None => post.clone(),
            };
            tapes.push(LayerTape {
                input: std::mem::replace(&mut h, out),
                pre,
                post,
                mask,
            });
        }
        Ok((h, MlpTape { layers: tapes }))
    }

    /// Deterministic forward pass with tape (dropout off).
    pub fn forward_eval(&self, x: &[f64]) -> Result<(Vec<f64>, MlpTape)> {
        self.forward(x, 1.0, &mut NoRng)
    }

    /// Back-propagates `dy` through the recorded pass, accumulating
    /// parameter gradients into `grads` and returning the input gradient.
    pub fn backward(&self, tape: &MlpTape, dy: &[f64], grads: &mut MlpParams) -> Vec<f64> {
        let mut delta = dy.to_vec();
        for (k, (l, t)) in self.layers.iter().zip(&tape.layers).enumerate().rev() {
            if let Some(m) = &t.mask {
                delta.iter_mut().zip(m).for_each(|(d, m)| *d *= m);
            }
            for ((d, &z), &a) in delta.iter_mut().zip(&t.pre).zip(&t.post) {
                *d *= l.activation.derivative(z, a);
            }
            let g = &mut grads.layers[k];
            g.weight.add_outer(1.0, &delta, &t.input);
            if let Some(b) = &mut g.bias {
                axpy(1.0, &delta, b);
            }
            delta = l.weight.matvec_t(&delta);
        }
        delta
    }
}

impl Parameterized for MlpParams {
    fn visit(&self, f: &mut dyn FnMut(ParamKind, &[f64])) {
        for l in &self.layers {
            f(ParamKind::Weight, l.weight.as_slice());
            if let Some(b) = &l.bias {
                f(ParamKind::Bias, b);
            }
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(ParamKind, &mut [f64])) {
        for l in &mut self.layers {
            f(ParamKind::Weight, l.weight.as_mut_slice());
            if let Some(b) = &mut l.bias {
                f(ParamKind::Bias, b);
            }
        }
    }
}

/// Stand-in generator for passes where dropout is disabled; never sampled.
pub(crate) struct NoRng;

impl rand::RngCore for NoRng {
    fn next_u32(&mut self) -> u32 {
        unreachable!("dropout disabled")
    }
    fn next_u64(&mut self) -> u64 {
        unreachable!("dropout disabled")
    }
    fn fill_bytes(&mut self, _dst: &mut [u8]) {
        unreachable!("dropout disabled")
    }
}
