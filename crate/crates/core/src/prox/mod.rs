//! Penalties and their proximal maps.

mod admm;
mod banded;
mod difference;
mod fused_l0;
mod fused_l1;

use std::fmt;
use std::str::FromStr;

pub use admm::{prox_weighted_admm, AdmmConfig, AdmmOutcome, AdmmSolver};
pub use banded::{solve_banded_spd, BandedCholesky, BandedMatrix};
pub use difference::{build_difference_operator, DifferenceOperator};
pub use fused_l0::{prox_fused_l0, prox_fused_l0_boxed, segment_l0, segment_l0_boxed, L0Segmentation};
pub use fused_l1::{prox_fused_l1, prox_fused_l1_weighted};

use crate::error::{Error, Result};
use crate::stream::StreamSeries;

/// `sgn(z) · max(|z| − κ, 0)`
pub fn soft_threshold(z: f64, kappa: f64) -> f64 {
    if z > kappa {
        z - kappa
    } else if z < -kappa {
        z + kappa
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PenaltyKind {
    /// Total variation `Σ |θ_{t+1} − θ_t| / Δ_t`.
    FusedL1,
    /// Number of jumps `Σ 1(θ_{t+1} ≠ θ_t)`.
    FusedL0,
    /// `Σ |second divided difference|`, giving piecewise-linear θ.
    TrendL1,
}

impl PenaltyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PenaltyKind::FusedL1 => "l1",
            PenaltyKind::FusedL0 => "l0",
            PenaltyKind::TrendL1 => "tf",
        }
    }

    pub fn is_fused(self) -> bool {
        matches!(self, PenaltyKind::FusedL1 | PenaltyKind::FusedL0)
    }
}

impl fmt::Display for PenaltyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PenaltyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" | "fused_l1" => Ok(PenaltyKind::FusedL1),
            "l0" | "fused_l0" => Ok(PenaltyKind::FusedL0),
            "tf" | "trend_l1" => Ok(PenaltyKind::TrendL1),
            other => Err(Error::InvalidArgument(format!("unknown penalty {other:?}"))),
        }
    }
}

/// A penalty together with the point spacing it is evaluated on.
///
/// `spacing` holds one calendar gap per pair of neighbouring points. The
/// ℓ1 penalties weight differences by it; the ℓ0 penalty ignores it and
/// treats retained points as equispaced.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySpec {
    pub kind: PenaltyKind,
    spacing: Vec<f64>,
}

impl PenaltySpec {
    /// Penalty on `n` equispaced points.
    pub fn unit(kind: PenaltyKind, n: usize) -> Self {
        Self {
            kind,
            spacing: vec![1.0; n.saturating_sub(1)],
        }
    }

    pub fn with_spacing(kind: PenaltyKind, spacing: Vec<f64>) -> Result<Self> {
        if spacing.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidArgument("spacing must be positive".into()));
        }
        let spacing = if kind == PenaltyKind::FusedL0 {
            vec![1.0; spacing.len()]
        } else {
            spacing
        };
        Ok(Self { kind, spacing })
    }

    /// Penalty adapted to the series' calendar spacing.
    pub fn for_series(kind: PenaltyKind, series: &StreamSeries) -> Self {
        Self::with_spacing(kind, series.spacing().to_vec()).expect("series spacing is positive")
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn len(&self) -> usize {
        self.spacing.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn is_equispaced(&self) -> bool {
        self.spacing.iter().all(|&d| d == 1.0)
    }

    /// Per-row weights of the fused penalties (`1 / Δ_t`).
    pub fn weights(&self) -> Vec<f64> {
        self.spacing.iter().map(|d| 1.0 / d).collect()
    }

    pub fn check_compatible(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::IncompatiblePenalty(format!(
                "penalty built for {} points, series has {n}",
                self.len()
            )));
        }
        if self.kind == PenaltyKind::TrendL1 && n < 3 {
            return Err(Error::SeriesTooShort { needed: 3, actual: n });
        }
        Ok(())
    }

    pub fn difference_operator(&self) -> Result<DifferenceOperator> {
        let order = if self.kind == PenaltyKind::TrendL1 { 2 } else { 1 };
        build_difference_operator(&self.spacing, order)
    }

    /// `H(θ)`.
    pub fn evaluate(&self, theta: &[f64]) -> Result<f64> {
        self.check_compatible(theta.len())?;
        Ok(match self.kind {
            PenaltyKind::FusedL1 => theta
                .windows(2)
                .zip(&self.spacing)
                .map(|(w, d)| (w[1] - w[0]).abs() / d)
                .sum(),
            PenaltyKind::FusedL0 => theta.windows(2).filter(|w| w[1] != w[0]).count() as f64,
            PenaltyKind::TrendL1 => self.difference_operator()?.l1_norm_of(theta),
        })
    }
}
