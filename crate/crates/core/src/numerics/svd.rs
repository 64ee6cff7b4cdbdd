//! Thin SVD by one-sided Jacobi rotations, and the SVD-based pseudoinverse.
//!
//! One-sided Jacobi orthogonalizes the columns of a working copy of the
//! matrix; it converges to high relative accuracy and needs nothing beyond
//! plane rotations, which is plenty for the small `d x N` instrument
//! matrices this crate decomposes.

use super::matrix::{dot, Matrix};
use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 80;

#[derive(Debug, Clone)]
pub struct Svd {
    /// `rows x k` with orthonormal columns, `k = min(rows, cols)`.
    pub u: Matrix,
    /// Non-negative, descending.
    pub singular_values: Vec<f64>,
    /// `cols x k` with orthonormal columns.
    pub v: Matrix,
}

impl Svd {
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (j, s) in self.singular_values.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&self.v.transpose()).expect("svd factors chain")
    }
}

pub fn svd(m: &Matrix) -> Result<Svd> {
    if !m.is_finite() {
        return Err(Error::contract(format!(
            "svd input {}x{} has non-finite entries",
            m.rows(),
            m.cols()
        )));
    }
    if m.rows() >= m.cols() {
        jacobi_tall(m)
    } else {
        let t = jacobi_tall(&m.transpose())?;
        Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        })
    }
}

/// Requires `rows >= cols`.
fn jacobi_tall(m: &Matrix) -> Result<Svd> {
    let (rows, cols) = m.shape();
    let mut w: Vec<Vec<f64>> = (0..cols).map(|j| m.column(j)).collect();
    let mut v: Vec<Vec<f64>> = (0..cols)
        .map(|j| {
            let mut e = vec![0.0; cols];
            e[j] = 1.0;
            e
        })
        .collect();

    // roundoff-level columns (from collinear inputs) are left alone
    let frob2: f64 = w.iter().map(|c| dot(c, c)).sum();
    let tiny = f64::EPSILON * f64::EPSILON * frob2;
    let mut converged = cols < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..cols {
            for q in p + 1..cols {
                let alpha = dot(&w[p], &w[p]);
                let beta = dot(&w[q], &w[q]);
                let gamma = dot(&w[p], &w[q]);
                let scale = (alpha * beta).sqrt();
                if gamma == 0.0
                    || alpha <= tiny
                    || beta <= tiny
                    || scale < f64::MIN_POSITIVE
                    || gamma.abs() <= f64::EPSILON * scale
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::SvdNoConvergence {
            rows,
            cols,
            sweeps: MAX_SWEEPS,
        });
    }

    let mut order: Vec<(f64, usize)> = w.iter().enumerate().map(|(j, c)| (dot(c, c).sqrt(), j)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let sigma_max = order.first().map_or(0.0, |o| o.0);
    let negligible = sigma_max * f64::EPSILON * rows.max(cols) as f64;

    let mut u_cols: Vec<Vec<f64>> = Vec::with_capacity(cols);
    let mut pending = Vec::new();
    for (k, &(s, j)) in order.iter().enumerate() {
        if s > negligible && s > 0.0 {
            u_cols.push(w[j].iter().map(|x| x / s).collect());
        } else {
            u_cols.push(Vec::new());
            pending.push(k);
        }
    }
    complete_orthonormal(&mut u_cols, &pending, rows);

    let singular_values = order.iter().map(|o| o.0).collect();
    let u = Matrix::from_columns(rows, &u_cols)?;
    let v_sorted: Vec<Vec<f64>> = order.iter().map(|o| v[o.1].clone()).collect();
    let v = Matrix::from_columns(cols, &v_sorted)?;
    Ok(Svd {
        u,
        singular_values,
        v,
    })
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let (a, b) = (&mut head[p], &mut tail[0]);
    for (x, y) in a.iter_mut().zip(b.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills the `pending` slots with unit vectors orthogonal to every other
/// column, drawing candidates from the standard basis.
fn complete_orthonormal(cols: &mut [Vec<f64>], pending: &[usize], dim: usize) {
    let mut basis = 0;
    for &slot in pending {
        while basis < dim {
            let mut cand = vec![0.0; dim];
            cand[basis] = 1.0;
            basis += 1;
            // two Gram-Schmidt passes
            for _ in 0..2 {
                for (k, c) in cols.iter().enumerate() {
                    if k == slot || c.is_empty() {
                        continue;
                    }
                    let proj = dot(&cand, c);
                    for (x, y) in cand.iter_mut().zip(c) {
                        *x -= proj * y;
                    }
                }
            }
            let n = dot(&cand, &cand).sqrt();
            if n > 1e-6 {
                cols[slot] = cand.into_iter().map(|x| x / n).collect();
                break;
            }
        }
    }
}

/// Default relative cutoff: machine epsilon times the larger dimension.
pub fn default_rcond(m: &Matrix) -> f64 {
    f64::EPSILON * m.rows().max(m.cols()) as f64
}

/// Moore-Penrose pseudoinverse. Singular values `<= rcond * sigma_max` are
/// treated as zero; `None` selects [`default_rcond`].
pub fn pinv(m: &Matrix, rcond: Option<f64>) -> Result<Matrix> {
    let rcond = rcond.unwrap_or_else(|| default_rcond(m));
    if !(rcond >= 0.0) {
        return Err(Error::contract(format!("rcond must be >= 0, got {rcond}")));
    }
    let dec = svd(m)?;
    let sigma_max = dec.singular_values.first().copied().unwrap_or(0.0);
    let cutoff = rcond * sigma_max;
    let (rows, cols) = m.shape();
    let mut out = Matrix::zeros(cols, rows);
    for (k, &s) in dec.singular_values.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let inv = 1.0 / s;
        let vk = dec.v.column(k);
        let uk = dec.u.column(k);
        out.add_outer(inv, &vk, &uk);
    }
    Ok(out)
}
