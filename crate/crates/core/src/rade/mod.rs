//! Distributed consensus estimation over a virtual topology.
//!
//! [`admm_run`] is the synchronous baseline: each virtual sensor `i` keeps a
//! local estimate `θ_i`, an auxiliary variable `z_i` and multipliers
//! `λ_{j,i}` for the constraints `θ_j = z_i`, imposed over the closed
//! neighbourhood of `i` (its neighbours and itself). Including `i` itself
//! makes every connected topology force a common estimate, bipartite ones
//! included.
//!
//! [`rade_run`] is the randomized asynchronous variant with per-sensor
//! stopping. Its auxiliary variables live on the virtual links, so that a
//! single contact updates everything the two partners share and no state
//! goes stale between them.

mod admm;
mod randomized;
mod updates;

use nalgebra::DVector;
use serde::Serialize;

pub use admm::{admm_run, EstimatorState};
pub use randomized::rade_run;
pub use updates::{
    lambda_update, stopping_check, theta_update, z_update, IncomingTerm, OutgoingTerm, StopStatus,
};

use crate::error::{Error, Result};
use crate::gossip::{AdjacencyGraph, ContactGraph, ContactRule};

/// Absolute and relative tolerances of the stopping criteria.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToleranceSpec {
    pub eps_abs: f64,
    pub eps_rel: f64,
}

impl ToleranceSpec {
    pub fn new(eps_abs: f64, eps_rel: f64) -> Result<Self> {
        if !(eps_abs > 0.0) || !(eps_rel > 0.0) {
            return Err(Error::invalid(format!(
                "tolerances must be positive, got eps_abs={eps_abs}, eps_rel={eps_rel}"
            )));
        }
        Ok(ToleranceSpec { eps_abs, eps_rel })
    }
}

/// Normalization of the `z` update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ZNormalization {
    /// Stationary point of the augmented Lagrangian: divide by `Σ_j ρ_{j,i}`.
    #[default]
    Gradient,
    /// Divide by the number of virtual sensors `V`.
    SensorCount,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub tolerance: ToleranceSpec,
    /// Uniform penalty `ρ_{i,j}`.
    pub rho: f64,
    pub z_normalization: ZNormalization,
    /// Round budget of [`admm_run`].
    pub max_iters: u64,
    /// Slot budget of [`rade_run`].
    pub max_slots: u64,
    pub contact_rule: ContactRule,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            tolerance: ToleranceSpec {
                eps_abs: 1e-4,
                eps_rel: 1e-4,
            },
            rho: 1.0,
            z_normalization: ZNormalization::Gradient,
            max_iters: 100_000,
            max_slots: 1_000_000,
            contact_rule: ContactRule::Multiple,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        ToleranceSpec::new(self.tolerance.eps_abs, self.tolerance.eps_rel)?;
        if !(self.rho > 0.0) || !self.rho.is_finite() {
            return Err(Error::invalid(format!(
                "rho must be positive, got {}",
                self.rho
            )));
        }
        Ok(())
    }
}

/// Result of one estimator run.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateOutcome {
    /// Final `θ_i` of every virtual sensor.
    pub estimates: Vec<DVector<f64>>,
    /// Synchronous rounds (ADMM) or gossip slots (RADE).
    pub iterations: u64,
    /// Number of n-sized vectors sent between sensors.
    pub messages: u64,
    pub converged: bool,
}

impl EstimateOutcome {
    /// Mean over sensors of the per-sensor MSE.
    pub fn mse(&self, truth: &DVector<f64>) -> Result<f64> {
        let mut total = 0.0;
        for e in &self.estimates {
            total += crate::sensing::mse(e, truth)?;
        }
        Ok(total / self.estimates.len() as f64)
    }

    /// Largest pairwise distance between local estimates.
    pub fn max_disagreement(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (a, ea) in self.estimates.iter().enumerate() {
            for eb in &self.estimates[a + 1..] {
                worst = worst.max((ea - eb).norm());
            }
        }
        worst
    }
}

/// Virtual topology over which sensors are coupled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Coupling {
    graph: AdjacencyGraph,
}

impl Coupling {
    pub fn from_links(v_count: usize, links: &[(usize, usize)]) -> Result<Self> {
        if v_count == 0 {
            return Err(Error::invalid("coupling needs at least one sensor"));
        }
        if let Some(&(a, b)) = links
            .iter()
            .find(|(a, b)| *a >= v_count || *b >= v_count || a == b)
        {
            return Err(Error::invalid(format!("invalid virtual link ({a}, {b})")));
        }
        Ok(Coupling {
            graph: AdjacencyGraph::from_edges(v_count, links),
        })
    }

    pub fn len(&self) -> usize {
        self.graph.node_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn graph(&self) -> &AdjacencyGraph {
        &self.graph
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.graph.neighbors(i)
    }

    /// `i` followed by its neighbours; empty for an isolated sensor, which
    /// then solves its own least-squares problem unconstrained.
    pub fn closed_neighbors(&self, i: usize) -> Vec<usize> {
        let open = self.neighbors(i);
        if open.is_empty() {
            return Vec::new();
        }
        std::iter::once(i).chain(open.iter().copied()).collect()
    }

    /// Number of directed links between distinct sensors.
    pub fn directed_links(&self) -> usize {
        (0..self.len()).map(|i| self.neighbors(i).len()).sum()
    }
}
