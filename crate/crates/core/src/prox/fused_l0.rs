//! Exact ℓ0 segmentation of a real vector by optimal partitioning.
//!
//! Solves `min_u ½‖u − ū‖² + λ′ #{i : u_{i+1} ≠ u_i}`. Each segment takes its
//! mean, so the cost of a segment is half its within-segment sum of squares.
//! Candidate change points that can never again be optimal are pruned; the
//! pruning rule is strict, so the result equals the full quadratic recursion.
//! Equal-cost alternatives resolve to the one with fewer segments.

use crate::error::{Error, Result};

/// Relative tolerance under which two candidate costs count as tied.
const TIE_TOL: f64 = 1e-12;

/// Proximal map of `λ′ Σ 1(u_{i+1} ≠ u_i)`.
pub fn prox_fused_l0(u_bar: &[f64], lambda_prime: f64) -> Result<Vec<f64>> {
    Ok(segment_l0(u_bar, lambda_prime)?.fill(u_bar.len()))
}

/// Segment boundaries of an ℓ0 solution.
#[derive(Debug, Clone, PartialEq)]
pub struct L0Segmentation {
    /// Half-open `[start, end)` ranges covering `0..n` in order.
    pub segments: Vec<(usize, usize)>,
    pub means: Vec<f64>,
    pub objective: f64,
}

impl L0Segmentation {
    pub fn fill(&self, n: usize) -> Vec<f64> {
        let mut u = vec![0.0; n];
        for (&(a, b), &m) in self.segments.iter().zip(&self.means) {
            u[a..b].fill(m);
        }
        u
    }
}

pub fn segment_l0(u_bar: &[f64], lambda_prime: f64) -> Result<L0Segmentation> {
    segment_l0_boxed(u_bar, lambda_prime, f64::NEG_INFINITY, f64::INFINITY)
}

/// ℓ0 proximal map restricted to `lo <= u_i <= hi`.
///
/// For a fixed segmentation the best level in the box is the clamped segment
/// mean, so the recursion stays exact with the clamped segment cost.
pub fn prox_fused_l0_boxed(u_bar: &[f64], lambda_prime: f64, lo: f64, hi: f64) -> Result<Vec<f64>> {
    Ok(segment_l0_boxed(u_bar, lambda_prime, lo, hi)?.fill(u_bar.len()))
}

pub fn segment_l0_boxed(u_bar: &[f64], lambda_prime: f64, lo: f64, hi: f64) -> Result<L0Segmentation> {
    let n = u_bar.len();
    if lo.is_nan() || hi.is_nan() || lo > hi {
        return Err(Error::InvalidArgument(format!("invalid box [{lo}, {hi}]")));
    }
    if n == 0 {
        return Err(Error::EmptySeries);
    }
    if u_bar.iter().any(|v| v.is_nan()) || lambda_prime.is_nan() {
        return Err(Error::NanInput);
    }
    if lambda_prime < 0.0 {
        return Err(Error::InvalidArgument(format!("negative lambda {lambda_prime}")));
    }
    if lambda_prime == 0.0 {
        let means: Vec<f64> = u_bar.iter().map(|v| v.clamp(lo, hi)).collect();
        let objective = 0.5 * u_bar.iter().zip(&means).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        return Ok(L0Segmentation {
            segments: (0..n).map(|i| (i, i + 1)).collect(),
            means,
            objective,
        });
    }

    // Centre the data; the problem is translation-equivariant and the
    // prefix-sum cost formula loses less precision near zero.
    let shift = u_bar.iter().sum::<f64>() / n as f64;
    let mut s1 = vec![0.0; n + 1];
    let mut s2 = vec![0.0; n + 1];
    for (i, &v) in u_bar.iter().enumerate() {
        let c = v - shift;
        s1[i + 1] = s1[i] + c;
        s2[i + 1] = s2[i] + c * c;
    }
    let (lo_c, hi_c) = (lo - shift, hi - shift);
    let cost = |a: usize, b: usize| {
        let m = (b - a) as f64;
        let sum = s1[b] - s1[a];
        let mean = sum / m;
        let level = mean.clamp(lo_c, hi_c);
        // ½ Σ (c_i − level)² = ½ (Σc² − m·mean²) + ½ m (mean − level)²
        let within = (0.5 * ((s2[b] - s2[a]) - sum * mean)).max(0.0);
        within + 0.5 * m * (mean - level) * (mean - level)
    };

    // best[t]: optimal cost of u_bar[..t] plus λ′ per segment, minus one λ′.
    let mut best = vec![0.0; n + 1];
    let mut nseg = vec![0usize; n + 1];
    let mut prev = vec![0usize; n + 1];
    best[0] = -lambda_prime;
    let mut candidates: Vec<usize> = vec![0];
    // best[τ] + cost(τ, t) per candidate, reused by the pruning pass
    let mut partial: Vec<f64> = Vec::with_capacity(n);

    for t in 1..=n {
        partial.clear();
        partial.extend(candidates.iter().map(|&tau| best[tau] + cost(tau, t)));
        let mut pick = 0;
        let mut val = partial[0] + lambda_prime;
        let mut segs = nseg[candidates[0]] + 1;
        for (j, &tau) in candidates.iter().enumerate().skip(1) {
            let v = partial[j] + lambda_prime;
            let tol = TIE_TOL * (1.0 + v.abs().max(val.abs()));
            let s = nseg[tau] + 1;
            if v < val - tol || ((v - val).abs() <= tol && s < segs) {
                pick = j;
                val = v;
                segs = s;
            }
        }
        best[t] = val;
        nseg[t] = segs;
        prev[t] = candidates[pick];

        let margin = 1e-9 * (1.0 + val.abs());
        let mut keep = 0;
        for j in 0..candidates.len() {
            if partial[j] <= val + margin {
                candidates[keep] = candidates[j];
                keep += 1;
            }
        }
        candidates.truncate(keep);
        candidates.push(t);
    }

    let mut bounds = Vec::new();
    let mut t = n;
    while t > 0 {
        let a = prev[t];
        bounds.push((a, t));
        t = a;
    }
    bounds.reverse();
    let means = bounds
        .iter()
        .map(|&(a, b)| (u_bar[a..b].iter().sum::<f64>() / (b - a) as f64).clamp(lo, hi))
        .collect();
    Ok(L0Segmentation {
        segments: bounds,
        means,
        objective: best[n],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_lambda_is_identity() {
        let u = [0.3, -1.0, 2.5];
        assert_eq!(prox_fused_l0(&u, 0.0).unwrap(), u.to_vec());
    }

    #[test]
    fn two_point_split_versus_merge() {
        // split costs λ′, merge costs ½·(0.25 + 0.25) = 0.25
        assert_eq!(prox_fused_l0(&[0.0, 1.0], 0.2).unwrap(), vec![0.0, 1.0]);
        assert_eq!(prox_fused_l0(&[0.0, 1.0], 0.3).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn ties_prefer_fewer_segments() {
        assert_eq!(prox_fused_l0(&[0.0, 1.0], 0.25).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn step_signal_is_recovered() {
        let mut u_bar = vec![0.0; 50];
        u_bar[20..].fill(3.0);
        let seg = segment_l0(&u_bar, 0.5).unwrap();
        assert_eq!(seg.segments, vec![(0, 20), (20, 50)]);
        assert!((seg.objective - 0.5).abs() < 1e-12);
    }

    #[test]
    fn boxed_levels_are_clamped_means() {
        let u = prox_fused_l0_boxed(&[-20.0, -22.0, 1.0, 1.2], 0.5, -15.0, 15.0).unwrap();
        assert_eq!(u[0], -15.0);
        assert_eq!(u[1], -15.0);
        assert!((u[2] - 1.1).abs() < 1e-12);
    }

    #[test]
    fn rejects_nan_and_negative_lambda() {
        assert!(matches!(prox_fused_l0(&[f64::NAN], 1.0), Err(Error::NanInput)));
        assert!(prox_fused_l0(&[1.0], -0.1).is_err());
    }
}
