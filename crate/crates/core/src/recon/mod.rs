//! Treatment reconstruction.
//!
//! An item embedding `t` is lifted by `mlp0` to `v`, projected onto the
//! column space of its IV matrix `Z` (`fitted = Z Z⁺ v`), and split into
//! `fitted` and `residual = v - fitted`. Two small networks read
//! `[v ‖ pool(Z)]` and emit scalar weights; the reconstructed embedding is
//! `alpha1 * fitted + alpha2 * residual`.
//!
//! `Z` is constant. Gradients reach `mlp0` through the projector
//! `P = Z Z⁺` (fitted branch) and `I - P` (residual branch).

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{EmbeddingKind, EmbeddingTable};
use crate::error::{Error, Result};
use crate::iv::{IvMatrix, IvStore};
use crate::numerics::{dot, pinv, Activation, Layer, Matrix, MlpParams, MlpTape, ParamKind, Parameterized};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Weighted,
    Concat,
    FittedOnly,
    ResidualOnly,
    Original,
}

impl Variant {
    pub const ALL: [Variant; 5] = [
        Variant::Weighted,
        Variant::Concat,
        Variant::FittedOnly,
        Variant::ResidualOnly,
        Variant::Original,
    ];

    pub fn needs_ivs(self) -> bool {
        self != Variant::Original
    }

    /// Dimension of the reconstructed embedding.
    pub fn output_dim(self, query_dim: usize) -> usize {
        match self {
            Variant::Concat => 2 * query_dim,
            _ => query_dim,
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Variant::Weighted => "weighted",
            Variant::Concat => "concat",
            Variant::FittedOnly => "fitted_only",
            Variant::ResidualOnly => "residual_only",
            Variant::Original => "original",
        })
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Variant::ALL
            .iter()
            .copied()
            .find(|v| v.to_string() == s)
            .ok_or_else(|| format!("unknown variant `{s}` (expected weighted, concat, fitted_only, residual_only or original)"))
    }
}

/// How `Z` enters the weight networks alongside `v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaInput {
    /// Column-wise mean of `Z`; independent of `N`.
    MeanPool,
    /// All columns of `Z` concatenated.
    Flatten,
}

impl AlphaInput {
    fn context_dim(self, query_dim: usize, n: usize) -> usize {
        match self {
            AlphaInput::MeanPool => query_dim,
            AlphaInput::Flatten => query_dim * n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReconParams {
    pub mlp0: MlpParams,
    pub mlp1: MlpParams,
    pub mlp2: MlpParams,
    pub alpha_input: AlphaInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReconConfig {
    /// Hidden widths of `mlp0`; `None` means one hidden layer of width `d_q`.
    pub mlp0_hidden: Option<Vec<usize>>,
    /// Hidden width of the weight networks; `None` means `d_q / 2`.
    pub alpha_hidden: Option<usize>,
    pub alpha_input: AlphaInput,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig {
            mlp0_hidden: None,
            alpha_hidden: None,
            alpha_input: AlphaInput::MeanPool,
        }
    }
}

impl ReconParams {
    /// Default shapes: `mlp0 = [d_i -> d_q relu -> d_q]`, weight networks
    /// `[2 d_q -> d_q/2 relu -> 1]`. Weight-network output biases start at
    /// one so that training begins from `fitted + residual = v`.
    pub fn init<R: Rng>(
        item_dim: usize,
        query_dim: usize,
        n: usize,
        config: &ReconConfig,
        rng: &mut R,
    ) -> Result<Self> {
        let mut dims0 = vec![item_dim];
        match &config.mlp0_hidden {
            Some(h) => dims0.extend(h),
            None => dims0.push(query_dim),
        }
        dims0.push(query_dim);
        let mut acts0 = vec![Activation::Relu; dims0.len() - 2];
        acts0.push(Activation::Identity);
        let mlp0 = MlpParams::init(&dims0, &acts0, rng)?;

        let in_dim = query_dim + config.alpha_input.context_dim(query_dim, n);
        let hidden = config.alpha_hidden.unwrap_or((query_dim / 2).max(1));
        let alpha_net = |rng: &mut R| -> Result<MlpParams> {
            let mut m = MlpParams::init(&[in_dim, hidden, 1], &[Activation::Relu, Activation::Identity], rng)?;
            if let Some(b) = m.layers.last_mut().and_then(|l| l.bias.as_mut()) {
                b[0] = 1.0;
            }
            Ok(m)
        };
        let mlp1 = alpha_net(rng)?;
        let mlp2 = alpha_net(rng)?;
        Ok(ReconParams {
            mlp0,
            mlp1,
            mlp2,
            alpha_input: config.alpha_input,
        })
    }

    /// `mlp0` is the identity on `dim`; handy for geometric checks.
    pub fn identity(dim: usize, n: usize, alpha_input: AlphaInput) -> Self {
        let in_dim = dim + alpha_input.context_dim(dim, n);
        let unit = |bias: f64| {
            MlpParams::from_layers(vec![Layer {
                weight: Matrix::zeros(1, in_dim),
                bias: Some(vec![bias]),
                activation: Activation::Identity,
            }])
            .expect("single layer")
        };
        ReconParams {
            mlp0: MlpParams::identity(dim),
            mlp1: unit(1.0),
            mlp2: unit(1.0),
            alpha_input,
        }
    }

    pub fn item_dim(&self) -> usize {
        self.mlp0.input_dim()
    }

    pub fn query_dim(&self) -> usize {
        self.mlp0.output_dim()
    }
}

impl Parameterized for ReconParams {
    fn visit(&self, f: &mut dyn FnMut(ParamKind, &[f64])) {
        self.mlp0.visit(f);
        self.mlp1.visit(f);
        self.mlp2.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(ParamKind, &mut [f64])) {
        self.mlp0.visit_mut(f);
        self.mlp1.visit_mut(f);
        self.mlp2.visit_mut(f);
    }
}

/// Cached `Z`, `Z⁺` and the pooled context for one item.
#[derive(Debug, Clone)]
pub struct IvProjector {
    z: Matrix,
    z_pinv: Matrix,
    context: Vec<f64>,
}

impl IvProjector {
    pub fn new(iv: &IvMatrix, alpha_input: AlphaInput) -> Result<Self> {
        let z = iv.matrix.clone();
        let z_pinv = pinv(&z, None)?;
        let context = match alpha_input {
            AlphaInput::MeanPool => iv.column_mean(),
            AlphaInput::Flatten => (0..z.cols()).flat_map(|k| z.column(k)).collect(),
        };
        Ok(IvProjector { z, z_pinv, context })
    }

    pub fn z(&self) -> &Matrix {
        &self.z
    }

    pub fn query_dim(&self) -> usize {
        self.z.rows()
    }

    /// `(tau, fitted)` with `tau = Z⁺ v` and `fitted = Z tau`.
    pub fn project(&self, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let tau = self.z_pinv.matvec(v);
        let fitted = self.z.matvec(&tau);
        (tau, fitted)
    }

    /// `Pᵀ g` for `P = Z Z⁺`.
    pub fn project_adjoint(&self, g: &[f64]) -> Vec<f64> {
        self.z_pinv.matvec_t(&self.z.matvec_t(g))
    }

    pub fn alpha_features(&self, v: &[f64]) -> Vec<f64> {
        let mut x = Vec::with_capacity(v.len() + self.context.len());
        x.extend_from_slice(v);
        x.extend_from_slice(&self.context);
        x
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub item_id: String,
    pub fitted: Vec<f64>,
    pub residual: Vec<f64>,
    pub tau: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconstructedEmbedding {
    pub item_id: String,
    pub vector: Vec<f64>,
    pub alpha1: f64,
    pub alpha2: f64,
}

fn check_dims(t: &[f64], iv: &IvMatrix, mlp0: &MlpParams) -> Result<()> {
    if t.len() != mlp0.input_dim() {
        return Err(Error::contract(format!(
            "item `{}` embedding has dim {}, mlp0 expects {}",
            iv.item_id,
            t.len(),
            mlp0.input_dim()
        )));
    }
    if iv.query_dim() != mlp0.output_dim() {
        return Err(Error::contract(format!(
            "IV for `{}` has d_q={}, mlp0 outputs {}",
            iv.item_id,
            iv.query_dim(),
            mlp0.output_dim()
        )));
    }
    Ok(())
}

fn split(item_id: &str, v: &[f64], proj: &IvProjector) -> Decomposition {
    let (tau, fitted) = proj.project(v);
    let residual = v.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    Decomposition {
        item_id: item_id.to_string(),
        fitted,
        residual,
        tau,
    }
}

/// Splits `mlp0(t)` into its projection onto the columns of `Z` and the
/// orthogonal remainder.
pub fn decompose(t: &[f64], iv: &IvMatrix, mlp0: &MlpParams) -> Result<Decomposition> {
    check_dims(t, iv, mlp0)?;
    let v = mlp0.infer(t)?;
    let proj = IvProjector::new(iv, AlphaInput::MeanPool)?;
    Ok(split(&iv.item_id, &v, &proj))
}

/// Combination weights from `[mlp0(t) ‖ pool(Z)]`.
pub fn compute_alphas(t: &[f64], iv: &IvMatrix, params: &ReconParams) -> Result<(f64, f64)> {
    check_dims(t, iv, &params.mlp0)?;
    let v = params.mlp0.infer(t)?;
    let proj = IvProjector::new(iv, params.alpha_input)?;
    let x = proj.alpha_features(&v);
    Ok((params.mlp1.infer(&x)?[0], params.mlp2.infer(&x)?[0]))
}

pub fn combine(dec: &Decomposition, alpha1: f64, alpha2: f64) -> ReconstructedEmbedding {
    ReconstructedEmbedding {
        item_id: dec.item_id.clone(),
        vector: dec
            .fitted
            .iter()
            .zip(&dec.residual)
            .map(|(f, r)| alpha1 * f + alpha2 * r)
            .collect(),
        alpha1,
        alpha2,
    }
}

/// Record of one item's reconstruction, enough to back-propagate.
#[derive(Debug, Clone)]
pub struct ItemForward {
    pub output: Vec<f64>,
    v: Vec<f64>,
    tape0: MlpTape,
    fitted: Vec<f64>,
    residual: Vec<f64>,
    alphas: Option<AlphaForward>,
}

#[derive(Debug, Clone)]
struct AlphaForward {
    alpha1: f64,
    alpha2: f64,
    tape1: MlpTape,
    tape2: MlpTape,
}

impl ItemForward {
    pub fn alphas(&self) -> Option<(f64, f64)> {
        self.alphas.as_ref().map(|a| (a.alpha1, a.alpha2))
    }
}

/// Forward pass for one item under `variant`. `projector` may be `None`
/// only for [`Variant::Original`].
pub fn forward_item<R: Rng>(
    params: &ReconParams,
    t: &[f64],
    projector: Option<&IvProjector>,
    variant: Variant,
    keep: f64,
    rng: &mut R,
) -> Result<ItemForward> {
    let (v, tape0) = params.mlp0.forward(t, keep, rng)?;
    let Some(proj) = projector.filter(|_| variant.needs_ivs()) else {
        if variant.needs_ivs() {
            return Err(Error::contract(format!("variant {variant} needs an IV matrix")));
        }
        return Ok(ItemForward {
            output: v.clone(),
            v,
            tape0,
            fitted: Vec::new(),
            residual: Vec::new(),
            alphas: None,
        });
    };
    let (_, fitted) = proj.project(&v);
    let residual: Vec<f64> = v.iter().zip(&fitted).map(|(a, b)| a - b).collect();
    let mut alphas = None;
    let output = match variant {
        Variant::Weighted => {
            let x = proj.alpha_features(&v);
            let (a1, tape1) = params.mlp1.forward(&x, keep, rng)?;
            let (a2, tape2) = params.mlp2.forward(&x, keep, rng)?;
            let (alpha1, alpha2) = (a1[0], a2[0]);
            alphas = Some(AlphaForward {
                alpha1,
                alpha2,
                tape1,
                tape2,
            });
            fitted
                .iter()
                .zip(&residual)
                .map(|(f, r)| alpha1 * f + alpha2 * r)
                .collect()
        }
        Variant::Concat => fitted.iter().chain(&residual).copied().collect(),
        Variant::FittedOnly => fitted.clone(),
        Variant::ResidualOnly => residual.clone(),
        Variant::Original => unreachable!("handled above"),
    };
    Ok(ItemForward {
        output,
        v,
        tape0,
        fitted,
        residual,
        alphas,
    })
}

/// Accumulates parameter gradients for `d_output`, the loss gradient with
/// respect to `fwd.output`.
pub fn backward_item(
    params: &ReconParams,
    fwd: &ItemForward,
    projector: Option<&IvProjector>,
    variant: Variant,
    d_output: &[f64],
    grads: &mut ReconParams,
) {
    let dq = fwd.v.len();
    let (d_fitted, d_residual, d_alpha): (Vec<f64>, Vec<f64>, Option<(f64, f64)>) = match variant {
        Variant::Original => {
            params.mlp0.backward(&fwd.tape0, d_output, &mut grads.mlp0);
            return;
        }
        Variant::Weighted => {
            let a = fwd.alphas.as_ref().expect("weighted forward records alphas");
            (
                d_output.iter().map(|g| a.alpha1 * g).collect(),
                d_output.iter().map(|g| a.alpha2 * g).collect(),
                Some((dot(d_output, &fwd.fitted), dot(d_output, &fwd.residual))),
            )
        }
        Variant::Concat => (d_output[..dq].to_vec(), d_output[dq..].to_vec(), None),
        Variant::FittedOnly => (d_output.to_vec(), vec![0.0; dq], None),
        Variant::ResidualOnly => (vec![0.0; dq], d_output.to_vec(), None),
    };
    let proj = projector.expect("IV variants carry a projector");
    // residual = v - P v, so dv = d_r + Pᵀ (d_f - d_r)
    let diff: Vec<f64> = d_fitted.iter().zip(&d_residual).map(|(f, r)| f - r).collect();
    let mut dv = proj.project_adjoint(&diff);
    dv.iter_mut().zip(&d_residual).for_each(|(x, r)| *x += r);
    if let (Some((g1, g2)), Some(a)) = (d_alpha, fwd.alphas.as_ref()) {
        let dx1 = params.mlp1.backward(&a.tape1, &[g1], &mut grads.mlp1);
        let dx2 = params.mlp2.backward(&a.tape2, &[g2], &mut grads.mlp2);
        for k in 0..dq {
            dv[k] += dx1[k] + dx2[k];
        }
    }
    params.mlp0.backward(&fwd.tape0, &dv, &mut grads.mlp0);
}

/// Reconstructs every item of `items` offline with fixed parameters.
pub fn reconstruct_table(
    items: &EmbeddingTable,
    ivs: Option<&IvStore>,
    params: &ReconParams,
    variant: Variant,
) -> Result<EmbeddingTable> {
    let dq = params.query_dim();
    let mut out = EmbeddingTable::new(EmbeddingKind::Item, variant.output_dim(dq));
    out.set_metadata("variant", variant.to_string());
    out.set_metadata("source_dim", items.dim().to_string());
    let mut rng = crate::numerics::mlp::NoRng;
    for (id, t) in items.iter() {
        let projector = if variant.needs_ivs() {
            let store = ivs.ok_or_else(|| Error::Config(format!("variant {variant} needs an IV store")))?;
            let iv = store.require(id)?;
            check_dims(t, iv, &params.mlp0)?;
            Some(IvProjector::new(iv, params.alpha_input)?)
        } else {
            None
        };
        let fwd = forward_item(params, t, projector.as_ref(), variant, 1.0, &mut rng)?;
        out.insert(id, fwd.output)?;
    }
    Ok(out)
}
