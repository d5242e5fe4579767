//! Estimator state and the synchronous ADMM baseline.

use nalgebra::DVector;

use super::updates::{
    lambda_update, stopping_check, theta_update, z_update, IncomingTerm, OutgoingTerm,
};
use super::{Coupling, EstimateOutcome, EstimatorConfig};
use crate::error::{Error, Result};
use crate::sensing::{solve_spd, EstimationTask, MeasurementModel};

/// Variables of every virtual sensor.
///
/// `lambda[i][k]` and `rho[i][k]` hold `λ_{j,i}` and `ρ_{j,i}` for
/// `j = closed[i][k]`, so sensor `i` owns the multipliers of the constraints
/// on its own `z_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub theta: Vec<DVector<f64>>,
    pub z: Vec<DVector<f64>>,
    pub z_prev: Vec<DVector<f64>>,
    pub lambda: Vec<Vec<DVector<f64>>>,
    pub rho: Vec<Vec<f64>>,
    closed: Vec<Vec<usize>>,
    /// `mirror[i][k]`: position of `i` in `closed[closed[i][k]]`.
    mirror: Vec<Vec<usize>>,
    pub iteration: u64,
    pub messages: Vec<u64>,
    pub primal_ok: Vec<bool>,
    pub dual_ok: Vec<bool>,
}

impl EstimatorState {
    /// All variables start at zero and no sensor has met its stopping test.
    pub fn new(coupling: &Coupling, params: usize, rho: f64) -> Self {
        let v = coupling.len();
        let closed: Vec<Vec<usize>> = (0..v).map(|i| coupling.closed_neighbors(i)).collect();
        let mirror = (0..v)
            .map(|i| {
                closed[i]
                    .iter()
                    .map(|&j| {
                        closed[j]
                            .iter()
                            .position(|&x| x == i)
                            .expect("coupling is symmetric")
                    })
                    .collect()
            })
            .collect();
        EstimatorState {
            theta: vec![DVector::zeros(params); v],
            z: vec![DVector::zeros(params); v],
            z_prev: vec![DVector::zeros(params); v],
            lambda: closed
                .iter()
                .map(|c| vec![DVector::zeros(params); c.len()])
                .collect(),
            rho: closed.iter().map(|c| vec![rho; c.len()]).collect(),
            closed,
            mirror,
            iteration: 0,
            messages: vec![0; v],
            primal_ok: vec![false; v],
            dual_ok: vec![false; v],
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Closed neighbourhood of `i`, in the order used by `lambda[i]`.
    pub fn closed(&self, i: usize) -> &[usize] {
        &self.closed[i]
    }

    /// `λ_{j,i}`, if `(j, i)` is a coupled pair.
    pub fn lambda(&self, j: usize, i: usize) -> Option<&DVector<f64>> {
        let k = self.closed[i].iter().position(|&x| x == j)?;
        Some(&self.lambda[i][k])
    }

    pub fn total_messages(&self) -> u64 {
        self.messages.iter().sum()
    }

    pub fn all_stopped(&self) -> bool {
        self.primal_ok
            .iter()
            .zip(&self.dual_ok)
            .all(|(p, d)| *p && *d)
    }

    /// Augmented Lagrangian
    /// `Σ_i ½‖y_i − H_iθ_i‖² + Σ_{(i,j)} [−λ_{i,j}ᵀ(θ_i − z_j) + ρ_{i,j}/2 ‖θ_i − z_j‖²]`.
    pub fn augmented_lagrangian(&self, models: &[MeasurementModel]) -> f64 {
        let mut total: f64 = models
            .iter()
            .zip(&self.theta)
            .map(|(m, t)| m.objective(t))
            .sum();
        for (j, neighbourhood) in self.closed.iter().enumerate() {
            for (k, &i) in neighbourhood.iter().enumerate() {
                let gap = &self.theta[i] - &self.z[j];
                total += -self.lambda[j][k].dot(&gap) + 0.5 * self.rho[j][k] * gap.norm_squared();
            }
        }
        total
    }

    /// `θ_i` minimizing the Lagrangian given the other variables; the plain
    /// local least-squares solution for an uncoupled sensor.
    pub fn theta_step(&self, i: usize, model: &MeasurementModel) -> Result<DVector<f64>> {
        if self.closed[i].is_empty() {
            return solve_spd(
                model.h.transpose() * &model.h,
                &(model.h.transpose() * &model.y),
            );
        }
        let terms: Vec<OutgoingTerm<'_>> = self.closed[i]
            .iter()
            .enumerate()
            .map(|(k, &j)| {
                let back = self.mirror[i][k];
                OutgoingTerm {
                    lambda: &self.lambda[j][back],
                    rho: self.rho[j][back],
                    z: &self.z[j],
                }
            })
            .collect();
        theta_update(model, &terms)
    }

    /// `z_i` minimizing the Lagrangian given the other variables.
    pub fn z_step(&self, i: usize, config: &EstimatorConfig) -> DVector<f64> {
        if self.closed[i].is_empty() {
            return self.theta[i].clone();
        }
        let terms: Vec<IncomingTerm<'_>> = self.closed[i]
            .iter()
            .enumerate()
            .map(|(k, &j)| IncomingTerm {
                theta: &self.theta[j],
                lambda: &self.lambda[i][k],
                rho: self.rho[i][k],
            })
            .collect();
        z_update(&terms, config.z_normalization, self.len())
    }

    pub(crate) fn check(&mut self, i: usize, config: &EstimatorConfig) {
        let incoming: Vec<(f64, &DVector<f64>)> = self.rho[i]
            .iter()
            .copied()
            .zip(self.lambda[i].iter())
            .collect();
        let status = stopping_check(
            &self.theta[i],
            &self.z[i],
            &self.z_prev[i],
            &incoming,
            &config.tolerance,
            self.len(),
        );
        self.primal_ok[i] = status.primal_ok;
        self.dual_ok[i] = status.dual_ok;
    }
}

fn check_inputs(
    coupling: &Coupling,
    task: &EstimationTask,
    config: &EstimatorConfig,
) -> Result<()> {
    config.validate()?;
    if task.models.len() != coupling.len() {
        return Err(Error::invalid(format!(
            "task has {} sensors but the coupling has {}",
            task.models.len(),
            coupling.len()
        )));
    }
    Ok(())
}

pub(super) fn outcome(state: EstimatorState, iterations: u64, converged: bool) -> EstimateOutcome {
    let messages = state.total_messages();
    EstimateOutcome {
        estimates: state.theta,
        iterations,
        messages,
        converged,
    }
}

/// Synchronous ADMM: every round updates all `θ`, then all `z`, then all
/// `λ`, and every sensor sends `θ_i` and `z_i` to each neighbour. Stops once
/// every sensor passes both stopping tests or after `config.max_iters` rounds.
pub fn admm_run(
    coupling: &Coupling,
    task: &EstimationTask,
    config: &EstimatorConfig,
) -> Result<EstimateOutcome> {
    check_inputs(coupling, task, config)?;
    let mut state = EstimatorState::new(coupling, task.params(), config.rho);
    let v = state.len();
    while state.iteration < config.max_iters {
        state.iteration += 1;
        let theta = (0..v)
            .map(|i| state.theta_step(i, &task.models[i]))
            .collect::<Result<Vec<_>>>()?;
        state.theta = theta;
        let z: Vec<DVector<f64>> = (0..v).map(|i| state.z_step(i, config)).collect();
        state.z_prev = std::mem::replace(&mut state.z, z);
        for i in 0..v {
            for k in 0..state.closed[i].len() {
                let j = state.closed[i][k];
                state.lambda[i][k] = lambda_update(
                    &state.lambda[i][k],
                    state.rho[i][k],
                    &state.theta[j],
                    &state.z[i],
                );
            }
            state.messages[i] += 2 * coupling.neighbors(i).len() as u64;
        }
        for i in 0..v {
            if state.closed[i].is_empty() {
                state.primal_ok[i] = true;
                state.dual_ok[i] = true;
            } else {
                state.check(i, config);
            }
        }
        if state.all_stopped() {
            let iterations = state.iteration;
            return Ok(outcome(state, iterations, true));
        }
    }
    let iterations = state.iteration;
    Ok(outcome(state, iterations, false))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rade::ToleranceSpec;
    use crate::sensing::{centralized_ls, generate_estimation_task};

    fn complete(v: usize) -> Coupling {
        let links: Vec<(usize, usize)> = (0..v)
            .flat_map(|a| (a + 1..v).map(move |b| (a, b)))
            .collect();
        Coupling::from_links(v, &links).unwrap()
    }

    fn star(v: usize) -> Coupling {
        let links: Vec<(usize, usize)> = (1..v).map(|b| (0, b)).collect();
        Coupling::from_links(v, &links).unwrap()
    }

    #[test]
    fn single_sensor_solves_locally() {
        let task = generate_estimation_task(3, 6, 1, 0.1, 4).unwrap();
        let out = admm_run(
            &Coupling::from_links(1, &[]).unwrap(),
            &task,
            &EstimatorConfig::default(),
        )
        .unwrap();
        assert!(out.converged);
        assert_eq!(out.iterations, 1);
        assert_eq!(out.messages, 0);
        let ls = centralized_ls(&task).unwrap();
        assert!((&out.estimates[0] - ls).norm() < 1e-12);
    }

    #[test]
    fn noiseless_complete_matches_least_squares() {
        let task = generate_estimation_task(3, 4, 5, 0.0, 12).unwrap();
        let out = admm_run(&complete(5), &task, &EstimatorConfig::default()).unwrap();
        assert!(out.converged);
        let ls = centralized_ls(&task).unwrap();
        for e in &out.estimates {
            assert!((e - &ls).norm() < 1e-3);
        }
        assert_eq!(out.messages, out.iterations * 2 * 20);
    }

    #[test]
    fn star_reaches_consensus() {
        let task = generate_estimation_task(3, 4, 6, 0.0, 3).unwrap();
        let cfg = EstimatorConfig {
            tolerance: ToleranceSpec::new(1e-6, 1e-6).unwrap(),
            ..Default::default()
        };
        let out = admm_run(&star(6), &task, &cfg).unwrap();
        assert!(out.converged);
        let ls = centralized_ls(&task).unwrap();
        for e in &out.estimates {
            assert!((e - &ls).norm() < 1e-4);
        }
    }

    #[test]
    fn disagreement_bounded_by_primal_threshold() {
        let coupling = complete(5);
        let cfg = EstimatorConfig::default();
        for seed in 0..10 {
            let task = generate_estimation_task(3, 5, 5, 0.05, seed).unwrap();
            let out = admm_run(&coupling, &task, &cfg).unwrap();
            let t = cfg.tolerance;
            let largest = out.estimates.iter().map(|e| e.norm()).fold(0.0, f64::max);
            let eps_pri = 5f64.sqrt() * t.eps_abs + t.eps_rel * largest;
            assert!(out.max_disagreement() <= 2.0 * eps_pri, "seed {seed}");
        }
    }

    #[test]
    fn exhausted_budget_is_flagged() {
        let task = generate_estimation_task(3, 4, 5, 0.1, 1).unwrap();
        let cfg = EstimatorConfig {
            max_iters: 2,
            ..Default::default()
        };
        let out = admm_run(&complete(5), &task, &cfg).unwrap();
        assert!(!out.converged);
        assert_eq!(out.iterations, 2);
    }

    #[test]
    fn mismatched_task_is_rejected() {
        let task = generate_estimation_task(3, 4, 4, 0.1, 1).unwrap();
        assert!(admm_run(&complete(5), &task, &EstimatorConfig::default()).is_err());
    }
}
