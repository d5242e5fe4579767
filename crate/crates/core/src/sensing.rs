//! Linear measurement model `y_i = H_i θ + η_i`, synthetic task generation
//! and the centralized least-squares baseline.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::sim_rng;

/// Relative eigenvalue floor below which a Gram matrix counts as singular.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    pub sensor: usize,
    /// m × n sensing matrix.
    pub h: DMatrix<f64>,
    /// m measurements.
    pub y: DVector<f64>,
    pub sigma: f64,
}

impl MeasurementModel {
    pub fn params(&self) -> usize {
        self.h.ncols()
    }

    pub fn measurements(&self) -> usize {
        self.h.nrows()
    }

    /// `½‖y − Hθ‖²`.
    pub fn objective(&self, theta: &DVector<f64>) -> f64 {
        0.5 * (&self.y - &self.h * theta).norm_squared()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimationTask {
    pub theta_true: DVector<f64>,
    pub models: Vec<MeasurementModel>,
}

impl EstimationTask {
    pub fn params(&self) -> usize {
        self.theta_true.len()
    }

    pub fn stacked(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.params();
        let rows: usize = self.models.iter().map(|m| m.measurements()).sum();
        let mut h = DMatrix::zeros(rows, n);
        let mut y = DVector::zeros(rows);
        let mut at = 0;
        for m in &self.models {
            let k = m.measurements();
            h.rows_mut(at, k).copy_from(&m.h);
            y.rows_mut(at, k).copy_from(&m.y);
            at += k;
        }
        (h, y)
    }

    /// `½‖y − Hθ‖²` over the stacked system.
    pub fn objective(&self, theta: &DVector<f64>) -> f64 {
        self.models.iter().map(|m| m.objective(theta)).sum()
    }
}

pub fn generate_estimation_task(
    n: usize,
    m: usize,
    v_count: usize,
    sigma: f64,
    seed: u64,
) -> Result<EstimationTask> {
    generate_estimation_task_with_sigmas(n, m, &vec![sigma; v_count], seed)
}

/// As [`generate_estimation_task`] with one noise level per sensor.
pub fn generate_estimation_task_with_sigmas(
    n: usize,
    m: usize,
    sigmas: &[f64],
    seed: u64,
) -> Result<EstimationTask> {
    if n == 0 || m == 0 || sigmas.is_empty() {
        return Err(Error::invalid(format!(
            "task dimensions must be positive (n={n}, m={m}, V={})",
            sigmas.len()
        )));
    }
    if let Some(s) = sigmas.iter().find(|s| !(**s >= 0.0) || !s.is_finite()) {
        return Err(Error::invalid(format!(
            "noise level must be finite and non-negative, got {s}"
        )));
    }
    let mut rng = sim_rng(seed);
    let theta_true = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let models = sigmas
        .iter()
        .enumerate()
        .map(|(sensor, &sigma)| {
            let h = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let noise = Normal::new(0.0, sigma).expect("sigma validated");
            let eta = DVector::from_fn(m, |_, _| noise.sample(&mut rng));
            let y = &h * &theta_true + eta;
            MeasurementModel {
                sensor,
                h,
                y,
                sigma,
            }
        })
        .collect();
    Ok(EstimationTask { theta_true, models })
}

/// Solves `A x = b` for symmetric positive definite `A`, refusing matrices
/// whose smallest eigenvalue is below `RANK_TOLERANCE` times the largest.
pub fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let eig = SymmetricEigen::new(a.clone());
    let max = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let min = eig
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min <= RANK_TOLERANCE * max {
        return Err(Error::Singular(format!(
            "eigenvalue ratio {min:e}/{max:e} below {RANK_TOLERANCE:e}"
        )));
    }
    let chol = a
        .cholesky()
        .ok_or_else(|| Error::Singular("cholesky factorization failed".into()))?;
    Ok(chol.solve(b))
}

/// Normal-equations solution `(HᵀH)⁻¹Hᵀy` of the stacked system.
pub fn centralized_ls(task: &EstimationTask) -> Result<DVector<f64>> {
    let n = task.params();
    let mut gram = DMatrix::zeros(n, n);
    let mut rhs = DVector::zeros(n);
    for m in &task.models {
        gram += m.h.transpose() * &m.h;
        rhs += m.h.transpose() * &m.y;
    }
    solve_spd(gram, &rhs)
}

/// `(1/n)·‖estimate − truth‖²`.
pub fn mse(estimate: &DVector<f64>, truth: &DVector<f64>) -> Result<f64> {
    if estimate.len() != truth.len() || truth.is_empty() {
        return Err(Error::invalid(format!(
            "mse needs equal non-zero lengths, got {} and {}",
            estimate.len(),
            truth.len()
        )));
    }
    Ok((estimate - truth).norm_squared() / truth.len() as f64)
}
