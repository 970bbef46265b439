//! Exact 1-D total-variation denoising by dynamic programming.
//!
//! Solves `min_u ½‖u − ū‖² + Σ_i λ_i |u_{i+1} − u_i|` in amortised linear time.
//! The forward pass keeps the derivative of the partial cost as a piecewise
//! linear function (a deque of knots); each edge clips it to `[−λ_i, λ_i]`
//! and records where the clip happens. The backward pass clamps each value to
//! the recorded interval.

use std::collections::VecDeque;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
struct Knot {
    x: f64,
    /// Change in slope when crossing the knot rightwards.
    da: f64,
    /// Change in intercept when crossing the knot rightwards.
    db: f64,
}

/// Proximal map of `λ′ Σ |u_{i+1} − u_i|`.
pub fn prox_fused_l1(u_bar: &[f64], lambda_prime: f64) -> Result<Vec<f64>> {
    check_inputs(u_bar, lambda_prime)?;
    if u_bar.len() < 2 || lambda_prime == 0.0 {
        return Ok(u_bar.to_vec());
    }
    let lambdas = vec![lambda_prime; u_bar.len() - 1];
    Ok(tv_dp(u_bar, &lambdas))
}

/// Proximal map of `λ′ Σ w_i |u_{i+1} − u_i|` with positive edge weights.
pub fn prox_fused_l1_weighted(u_bar: &[f64], lambda_prime: f64, weights: &[f64]) -> Result<Vec<f64>> {
    check_inputs(u_bar, lambda_prime)?;
    if weights.len() + 1 != u_bar.len() {
        return Err(Error::LengthMismatch {
            expected: u_bar.len().saturating_sub(1),
            actual: weights.len(),
        });
    }
    if weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument("edge weights must be positive".into()));
    }
    if u_bar.len() < 2 || lambda_prime == 0.0 {
        return Ok(u_bar.to_vec());
    }
    let lambdas: Vec<f64> = weights.iter().map(|w| w * lambda_prime).collect();
    Ok(tv_dp(u_bar, &lambdas))
}

fn check_inputs(u_bar: &[f64], lambda_prime: f64) -> Result<()> {
    if u_bar.is_empty() {
        return Err(Error::EmptySeries);
    }
    if u_bar.iter().any(|v| v.is_nan()) || lambda_prime.is_nan() {
        return Err(Error::NanInput);
    }
    if lambda_prime < 0.0 {
        return Err(Error::InvalidArgument(format!("negative lambda {lambda_prime}")));
    }
    Ok(())
}

fn tv_dp(u_bar: &[f64], lambdas: &[f64]) -> Vec<f64> {
    let n = u_bar.len();
    let mut knots: VecDeque<Knot> = VecDeque::with_capacity(2 * n);
    let mut lo = vec![0.0; n - 1];
    let mut hi = vec![0.0; n - 1];

    // Derivative of ½(x − ū_0)² on both unbounded pieces.
    let (mut a_left, mut b_left) = (1.0, -u_bar[0]);
    let (mut a_right, mut b_right) = (1.0, -u_bar[0]);

    for k in 0..n - 1 {
        let lam = lambdas[k];

        // Leftmost point where the derivative reaches −λ.
        let t_lo = loop {
            let x = (-lam - b_left) / a_left;
            match knots.front() {
                Some(front) if x > front.x => {
                    a_left += front.da;
                    b_left += front.db;
                    knots.pop_front();
                }
                _ => break x,
            }
        };
        knots.push_front(Knot {
            x: t_lo,
            da: a_left,
            db: b_left + lam,
        });
        a_left = 0.0;
        b_left = -lam;

        // Rightmost point where the derivative reaches +λ.
        let t_hi = loop {
            let x = (lam - b_right) / a_right;
            let back = *knots.back().expect("clip knot present");
            if x >= back.x || knots.len() == 1 {
                break x.max(t_lo);
            }
            a_right -= back.da;
            b_right -= back.db;
            knots.pop_back();
        };
        knots.push_back(Knot {
            x: t_hi,
            da: -a_right,
            db: lam - b_right,
        });
        a_right = 0.0;
        b_right = lam;

        lo[k] = t_lo;
        hi[k] = t_hi;

        let next = u_bar[k + 1];
        a_left += 1.0;
        b_left -= next;
        a_right += 1.0;
        b_right -= next;
    }

    // Root of the final derivative.
    let last = loop {
        let x = -b_left / a_left;
        match knots.front() {
            Some(front) if x > front.x => {
                a_left += front.da;
                b_left += front.db;
                knots.pop_front();
            }
            _ => break x,
        }
    };

    let mut u = vec![0.0; n];
    u[n - 1] = last;
    for k in (0..n - 1).rev() {
        u[k] = u[k + 1].clamp(lo[k], hi[k]);
    }
    u
}
