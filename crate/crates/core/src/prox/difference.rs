//! Spacing-aware first and second difference operators.

use super::banded::BandedMatrix;
use crate::error::{Error, Result};

/// A banded `(n − order) × n` difference operator.
///
/// Row `r` has `order + 1` nonzeros in columns `r..=r + order`:
/// - order 1: `(u_{r+1} − u_r) / Δ_r`
/// - order 2: `((u_{r+2} − u_{r+1}) / Δ_{r+1} − (u_{r+1} − u_r) / Δ_r) / Δ_r`
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceOperator {
    order: usize,
    cols: usize,
    coeffs: Vec<[f64; 3]>,
    spacing: Vec<f64>,
}

impl DifferenceOperator {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn rows(&self) -> usize {
        self.coeffs.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows()];
        self.apply_into(u, &mut out);
        out
    }

    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        debug_assert_eq!(u.len(), self.cols);
        for (r, (o, c)) in out.iter_mut().zip(&self.coeffs).enumerate() {
            *o = (0..=self.order).map(|k| c[k] * u[r + k]).sum();
        }
    }

    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        self.apply_transpose_into(v, &mut out);
        out
    }

    pub fn apply_transpose_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.rows());
        out.fill(0.0);
        for (r, (&vr, c)) in v.iter().zip(&self.coeffs).enumerate() {
            for k in 0..=self.order {
                out[r + k] += c[k] * vr;
            }
        }
    }

    /// `ρ DᵀD + I` as a symmetric banded matrix of bandwidth `order`.
    pub fn regularized_gram(&self, rho: f64) -> BandedMatrix {
        let mut m = BandedMatrix::zeros(self.cols, self.order);
        for i in 0..self.cols {
            m.set(i, i, 1.0);
        }
        for (r, c) in self.coeffs.iter().enumerate() {
            for a in 0..=self.order {
                for b in 0..=a {
                    m.add(r + a, r + b, rho * c[a] * c[b]);
                }
            }
        }
        m
    }

    /// `‖D u‖₁`
    pub fn l1_norm_of(&self, u: &[f64]) -> f64 {
        self.apply(u).iter().map(|v| v.abs()).sum()
    }
}

/// Builds the order-1 or order-2 operator for points separated by `spacing`.
///
/// `spacing` has one entry per gap, so the operator has `spacing.len() + 1`
/// columns.
pub fn build_difference_operator(spacing: &[f64], order: usize) -> Result<DifferenceOperator> {
    if !(1..=2).contains(&order) {
        return Err(Error::InvalidArgument(format!("difference order {order} not in {{1, 2}}")));
    }
    let cols = spacing.len() + 1;
    if cols < order + 1 {
        return Err(Error::SeriesTooShort {
            needed: order + 1,
            actual: cols,
        });
    }
    if spacing.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::InvalidArgument("spacing must be positive".into()));
    }
    let coeffs = match order {
        1 => spacing.iter().map(|&d| [-1.0 / d, 1.0 / d, 0.0]).collect(),
        _ => spacing
            .windows(2)
            .map(|w| {
                let a = 1.0 / w[0];
                let b = 1.0 / w[1];
                [a * a, -a * (a + b), a * b]
            })
            .collect(),
    };
    Ok(DifferenceOperator {
        order,
        cols,
        coeffs,
        spacing: spacing.to_vec(),
    })
}
