use crate::error::{Error, Result};

/// Distinguishes tensors subject to weight decay from bias vectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

/// A container of trainable tensors visited in a fixed order.
///
/// The same type doubles as its own gradient container: a zeroed clone
/// receives accumulated gradients, so flattening parameters and gradients
/// with the same visitor lines up coordinates exactly.
pub trait Parameterized {
    fn visit(&self, f: &mut dyn FnMut(ParamKind, &[f64]));
    fn visit_mut(&mut self, f: &mut dyn FnMut(ParamKind, &mut [f64]));

    fn num_params(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, t| n += t.len());
        n
    }

    fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.visit(&mut |_, t| out.extend_from_slice(t));
        out
    }

    fn assign(&mut self, flat: &[f64]) -> Result<()> {
        let n = self.num_params();
        if flat.len() != n {
            return Err(Error::contract(format!(
                "parameter vector has {} entries, expected {n}",
                flat.len()
            )));
        }
        let mut offset = 0;
        self.visit_mut(&mut |_, t| {
            t.copy_from_slice(&flat[offset..offset + t.len()]);
            offset += t.len();
        });
        Ok(())
    }

    fn fill(&mut self, value: f64) {
        self.visit_mut(&mut |_, t| t.iter_mut().for_each(|x| *x = value));
    }

    fn zeros_like(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    /// Sum of squares, optionally including bias vectors.
    fn squared_norm(&self, include_bias: bool) -> f64 {
        let mut s = 0.0;
        self.visit(&mut |kind, t| {
            if include_bias || kind == ParamKind::Weight {
                s += t.iter().map(|x| x * x).sum::<f64>();
            }
        });
        s
    }

    /// `self += scale * other` coordinate-wise. Shapes must agree.
    fn add_scaled(&mut self, scale: f64, other: &Self)
    where
        Self: Sized,
    {
        let flat = other.flatten();
        let mut offset = 0;
        self.visit_mut(&mut |_, t| {
            let len = t.len();
            for (x, g) in t.iter_mut().zip(&flat[offset..offset + len]) {
                *x += scale * g;
            }
            offset += len;
        });
    }

    /// Adds `2 * lambda * w` for every weight (and bias, if requested).
    fn add_l2_gradient(&mut self, params: &Self, lambda: f64, include_bias: bool)
    where
        Self: Sized,
    {
        if lambda == 0.0 {
            return;
        }
        let mut kinds = Vec::new();
        params.visit(&mut |kind, t| kinds.push((kind, t.to_vec())));
        let mut idx = 0;
        self.visit_mut(&mut |kind, g| {
            let (pk, ref w) = kinds[idx];
            debug_assert_eq!(pk, kind);
            if include_bias || kind == ParamKind::Weight {
                for (gi, wi) in g.iter_mut().zip(w) {
                    *gi += 2.0 * lambda * wi;
                }
            }
            idx += 1;
        });
    }

    fn all_finite(&self) -> bool {
        let mut ok = true;
        self.visit(&mut |_, t| ok &= t.iter().all(|x| x.is_finite()));
        ok
    }
}

/// A bare parameter vector; handy for tests and toy objectives.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatParams(pub Vec<f64>);

impl Parameterized for FlatParams {
    fn visit(&self, f: &mut dyn FnMut(ParamKind, &[f64])) {
        f(ParamKind::Weight, &self.0);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(ParamKind, &mut [f64])) {
        f(ParamKind::Weight, &mut self.0);
    }
}
