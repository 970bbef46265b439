//! Symmetric banded matrices and their Cholesky factorization.

use crate::error::{Error, Result};

/// A symmetric matrix stored by its lower diagonals:
/// `diags[k][i] = A[i + k][i]` for `k = 0..=bandwidth`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedMatrix {
    n: usize,
    bandwidth: usize,
    diags: Vec<Vec<f64>>,
}

impl BandedMatrix {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        let diags = (0..=bandwidth).map(|k| vec![0.0; n.saturating_sub(k)]).collect();
        Self { n, bandwidth, diags }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, 0);
        m.diags[0].fill(1.0);
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    /// Entry `(i, j)`; zero outside the band.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = i - j;
        if k > self.bandwidth {
            0.0
        } else {
            self.diags[k][j]
        }
    }

    /// Sets entry `(i, j)` and its mirror.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let k = i - j;
        assert!(k <= self.bandwidth, "entry ({i}, {j}) outside band");
        self.diags[k][j] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let cur = self.get(i, j);
        self.set(i, j, cur + v);
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, o) in out.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.bandwidth);
            let hi = (i + self.bandwidth).min(self.n - 1);
            *o = (lo..=hi).map(|j| self.get(i, j) * x[j]).sum();
        }
        out
    }

    pub fn cholesky(&self) -> Result<BandedCholesky> {
        BandedCholesky::factor(self)
    }
}

/// Lower-triangular banded factor `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    bandwidth: usize,
    /// `l[k][j] = L[j + k][j]`
    l: Vec<Vec<f64>>,
}

impl BandedCholesky {
    pub fn factor(a: &BandedMatrix) -> Result<Self> {
        let n = a.n;
        let p = a.bandwidth;
        let mut l: Vec<Vec<f64>> = (0..=p).map(|k| vec![0.0; n.saturating_sub(k)]).collect();
        for j in 0..n {
            let mut d = a.diags[0][j];
            for k in 1..=p.min(j) {
                let v = l[k][j - k];
                d -= v * v;
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { row: j, pivot: d });
            }
            let djj = d.sqrt();
            l[0][j] = djj;
            for i in j + 1..=(j + p).min(n.saturating_sub(1)) {
                let mut s = a.diags[i - j][j];
                let m_lo = i.saturating_sub(p);
                for m in m_lo..j {
                    s -= l[i - m][m] * l[j - m][m];
                }
                l[i - j][j] = s / djj;
            }
        }
        Ok(Self { n, bandwidth: p, l })
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if b.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                actual: b.len(),
            });
        }
        let p = self.bandwidth;
        let mut x = b.to_vec();
        self.solve_in_place(&mut x, p);
        Ok(x)
    }

    fn solve_in_place(&self, x: &mut [f64], p: usize) {
        let n = self.n;
        for i in 0..n {
            let mut s = x[i];
            for k in 1..=p.min(i) {
                s -= self.l[k][i - k] * x[i - k];
            }
            x[i] = s / self.l[0][i];
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for k in 1..=p.min(n - 1 - i) {
                s -= self.l[k][i] * x[i + k];
            }
            x[i] = s / self.l[0][i];
        }
    }
}

/// Solves `A x = b` for symmetric positive definite banded `A`.
pub fn solve_banded_spd(a: &BandedMatrix, b: &[f64]) -> Result<Vec<f64>> {
    a.cholesky()?.solve(b)
}
