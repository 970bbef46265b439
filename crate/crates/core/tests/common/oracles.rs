//! Reference solutions shared by the oracle tests and the acceptance run.

use rand::Rng;

/// Piecewise-constant signal plus noise.
pub fn random_signal<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    let mut level = rng.random_range(-2.0..2.0);
    (0..n)
        .map(|_| {
            if rng.random_bool(0.05) {
                level = rng.random_range(-2.0..2.0);
            }
            level + rng.random_range(-0.5..0.5)
        })
        .collect()
}

/// Exhaustive ℓ0 solution: objective and segment count, ties to fewer segments.
pub fn l0_brute_force(u_bar: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let n = u_bar.len();
    let mut best = (f64::INFINITY, usize::MAX, Vec::new());
    for mask in 0u32..(1 << (n - 1)) {
        let mut u = vec![0.0; n];
        let mut start = 0;
        let mut obj = 0.0;
        let mut segs = 0;
        for end in 1..=n {
            if end == n || mask & (1 << (end - 1)) != 0 {
                let seg = &u_bar[start..end];
                let mean = seg.iter().sum::<f64>() / seg.len() as f64;
                obj += 0.5 * seg.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
                u[start..end].fill(mean);
                segs += 1;
                start = end;
            }
        }
        obj += lambda * (segs - 1) as f64;
        let tol = 1e-12 * (1.0 + obj.abs());
        if obj < best.0 - tol || ((obj - best.0).abs() <= tol && segs < best.1) {
            best = (obj, segs, u);
        }
    }
    (best.0, best.2)
}

pub fn l0_objective(u_bar: &[f64], u: &[f64], lambda: f64) -> f64 {
    let fit: f64 = u_bar.iter().zip(u).map(|(a, b)| 0.5 * (a - b) * (a - b)).sum();
    fit + lambda * u.windows(2).filter(|w| w[0] != w[1]).count() as f64
}

/// Largest violation of `u − ū + λ Dᵀ s = 0` with `s_i ∈ ∂|·|` at `D u`,
/// recovering `s` from partial sums of `ū − u`.
pub fn l1_kkt_residual(u_bar: &[f64], u: &[f64], lambdas: &[f64]) -> f64 {
    let mut partial = 0.0;
    let mut worst: f64 = 0.0;
    for i in 0..u.len() - 1 {
        partial += u_bar[i] - u[i];
        let lam_s = -partial; // λ_i s_i
        let diff = u[i + 1] - u[i];
        let viol = if diff != 0.0 {
            (lam_s - lambdas[i] * diff.signum()).abs()
        } else {
            (lam_s.abs() - lambdas[i]).max(0.0)
        };
        worst = worst.max(viol);
    }
    partial += u_bar[u.len() - 1] - u[u.len() - 1];
    worst.max(partial.abs())
}
