//! Closed-form primal, auxiliary and multiplier updates of the augmented
//! Lagrangian
//!
//! ```text
//! L(θ, z, λ) = Σ_i [ ½‖y_i − H_i θ_i‖² − Σ_j λ_{i,j}ᵀ(θ_i − z_j) + Σ_j ρ_{i,j}/2 ‖θ_i − z_j‖² ]
//! ```
//!
//! and the per-sensor stopping test.

use nalgebra::{DMatrix, DVector};

use super::{ToleranceSpec, ZNormalization};
use crate::error::Result;
use crate::sensing::{solve_spd, MeasurementModel};

/// Term of `θ_i`'s update contributed by pair `(i, j)`.
#[derive(Debug, Clone, Copy)]
pub struct OutgoingTerm<'a> {
    /// `λ_{i,j}`.
    pub lambda: &'a DVector<f64>,
    /// `ρ_{i,j}`.
    pub rho: f64,
    /// `z_j`.
    pub z: &'a DVector<f64>,
}

/// Term of `z_i`'s update contributed by pair `(j, i)`.
#[derive(Debug, Clone, Copy)]
pub struct IncomingTerm<'a> {
    /// `θ_j`.
    pub theta: &'a DVector<f64>,
    /// `λ_{j,i}`.
    pub lambda: &'a DVector<f64>,
    /// `ρ_{j,i}`.
    pub rho: f64,
}

/// `(H_iᵀH_i + Σ_j ρ_{i,j} I)⁻¹ (H_iᵀy_i + Σ_j (λ_{i,j} + ρ_{i,j} z_j))`.
pub fn theta_update(model: &MeasurementModel, terms: &[OutgoingTerm<'_>]) -> Result<DVector<f64>> {
    let n = model.params();
    let rho_sum: f64 = terms.iter().map(|t| t.rho).sum();
    let lhs = model.h.transpose() * &model.h + DMatrix::identity(n, n) * rho_sum;
    let mut rhs = model.h.transpose() * &model.y;
    for t in terms {
        rhs += t.lambda + t.z * t.rho;
    }
    solve_spd(lhs, &rhs)
}

/// Stationary point of the Lagrangian in `z_i`:
/// `Σ_j (ρ_{j,i} θ_j − λ_{j,i}) / Σ_j ρ_{j,i}`. With uniform `ρ` this is the
/// neighbour average of `θ_j − λ_{j,i}/ρ`; `SensorCount` averages over
/// `v_count` instead.
pub fn z_update(
    terms: &[IncomingTerm<'_>],
    normalization: ZNormalization,
    v_count: usize,
) -> DVector<f64> {
    let n = terms.first().map_or(0, |t| t.theta.len());
    match normalization {
        ZNormalization::Gradient => {
            let rho_sum: f64 = terms.iter().map(|t| t.rho).sum();
            let mut acc = DVector::zeros(n);
            for t in terms {
                acc += t.theta * t.rho - t.lambda;
            }
            acc / rho_sum
        }
        ZNormalization::SensorCount => {
            let mut acc = DVector::zeros(n);
            for t in terms {
                acc += t.theta - t.lambda / t.rho;
            }
            acc / v_count as f64
        }
    }
}

/// `λ_{j,i} − ρ_{j,i}(θ_j − z_i)`.
pub fn lambda_update(
    lambda: &DVector<f64>,
    rho: f64,
    theta_j: &DVector<f64>,
    z_i: &DVector<f64>,
) -> DVector<f64> {
    lambda - (theta_j - z_i) * rho
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopStatus {
    pub primal_ok: bool,
    pub dual_ok: bool,
    pub primal_threshold: f64,
    pub dual_threshold: f64,
}

impl StopStatus {
    pub fn satisfied(&self) -> bool {
        self.primal_ok && self.dual_ok
    }
}

/// Per-sensor stopping test.
///
/// `ε_pri = √V·ε_abs + ε_rel·max(‖θ_i‖, ‖z_i‖)` against `‖θ_i − z_i‖`, and
/// `ε_dual = √V·ε_abs + ε_rel·Σ_j ‖ρ_{j,i} λ_{j,i}‖` against `‖z_i − z_i^prev‖`.
/// `incoming` lists `(ρ_{j,i}, λ_{j,i})`.
pub fn stopping_check(
    theta: &DVector<f64>,
    z: &DVector<f64>,
    z_prev: &DVector<f64>,
    incoming: &[(f64, &DVector<f64>)],
    tol: &ToleranceSpec,
    v_count: usize,
) -> StopStatus {
    let base = (v_count as f64).sqrt() * tol.eps_abs;
    let primal_threshold = base + tol.eps_rel * theta.norm().max(z.norm());
    let dual_threshold = base
        + tol.eps_rel
            * incoming
                .iter()
                .map(|(rho, l)| (*l * *rho).norm())
                .sum::<f64>();
    StopStatus {
        primal_ok: (theta - z).norm() < primal_threshold,
        dual_ok: (z - z_prev).norm() < dual_threshold,
        primal_threshold,
        dual_threshold,
    }
}
