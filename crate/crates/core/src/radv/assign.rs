//! Phase IV: local assignment, substrate evaluation and solution selection.

use std::collections::HashMap;

use super::{BenefitState, Virtualization, VsnRequest};
use crate::error::{Error, Result};
use crate::matching::{hungarian_max_weight, WeightMatrix};
use crate::swarm::Swarm;

/// Maximum-weight assignment of the held candidates to the virtual sensors,
/// each candidate restricted to its domain. `None` when no perfect matching
/// respects the domains. The returned solution is not yet evaluated on the
/// substrate; see [`total_benefit`].
pub fn solve_local_assignment(
    state: &BenefitState,
    request: &VsnRequest,
) -> Result<Option<Virtualization>> {
    if state.len() != request.v_count {
        return Err(Error::InvalidState(format!(
            "sensor {} holds {} candidates, {} needed",
            state.owner,
            state.len(),
            request.v_count
        )));
    }
    let selected: Vec<usize> = state.candidates().collect();
    let weights = state.rows.values().map(|r| r.row.clone()).collect();
    let allowed = state.rows.values().map(|r| r.mask.clone()).collect();
    let Some(assignment) = hungarian_max_weight(&WeightMatrix::new(weights, allowed)?) else {
        return Ok(None);
    };
    let mut mapping = vec![0; request.v_count];
    for (row, &j) in assignment.permutation.iter().enumerate() {
        mapping[j] = selected[row];
    }
    Ok(Some(Virtualization {
        selected,
        mapping,
        solver: state.owner,
        proxy_benefit: assignment.objective,
        benefit: 0.0,
        feasible: false,
    }))
}

/// Total benefit
/// `Σ_j α(c_{M(j)} − d_j)/c_{M(j)} + Σ_{(j,j')} β(H − h(M(j), M(j')))/H`
/// with `h` the shortest hop count on the substrate. Stores the value and the
/// feasibility flag in `v`. A virtual link between disconnected sensors makes
/// `v` infeasible and contributes nothing.
pub fn total_benefit(v: &mut Virtualization, swarm: &Swarm, request: &VsnRequest) -> Result<f64> {
    if v.mapping.len() != request.v_count {
        return Err(Error::invalid(format!(
            "mapping covers {} virtual sensors, request has {}",
            v.mapping.len(),
            request.v_count
        )));
    }
    let mut sorted = v.mapping.clone();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) || sorted != v.selected {
        return Err(Error::invalid(
            "mapping is not a bijection onto the selected sensors",
        ));
    }

    let mut total = 0.0;
    for (j, &s) in v.mapping.iter().enumerate() {
        let c = swarm.sensor(s)?.capacity;
        total += request.alpha * (c - request.demands[j]) / c;
    }
    let h_bound = request.hop_bound as f64;
    let mut feasible = true;
    let mut bfs: HashMap<usize, Vec<Option<usize>>> = HashMap::new();
    for &(a, b) in &request.virtual_links {
        let (sa, sb) = (v.mapping[a], v.mapping[b]);
        let dist = match bfs.entry(sa) {
            std::collections::hash_map::Entry::Occupied(e) => e.into_mut(),
            std::collections::hash_map::Entry::Vacant(e) => e.insert(swarm.hops_from(sa)?),
        };
        match dist[sb] {
            Some(h) => {
                feasible &= h <= request.hop_bound;
                total += request.beta * (h_bound - h as f64) / h_bound;
            }
            None => feasible = false,
        }
    }
    v.benefit = total;
    v.feasible = feasible;
    Ok(total)
}

/// Benefit of hosting every virtual sensor on a sensor of the largest
/// capacity in the swarm and every virtual link on a single physical link.
pub fn benefit_upper_bound(request: &VsnRequest, swarm: &Swarm) -> f64 {
    let c_max = swarm.max_capacity();
    let hosting: f64 = request
        .demands
        .iter()
        .map(|d| request.alpha * ((c_max - d) / c_max).max(0.0))
        .sum();
    let h = request.hop_bound as f64;
    hosting + request.virtual_links.len() as f64 * request.beta * (h - 1.0) / h
}

/// The feasible solution of largest benefit, ties going to the lowest solver
/// id; `None` rejects the request.
pub fn select_virtualization(solutions: &[Virtualization]) -> Option<Virtualization> {
    solutions
        .iter()
        .filter(|v| v.feasible)
        .fold(None, |best: Option<&Virtualization>, v| match best {
            Some(b)
                if b.benefit > v.benefit || (b.benefit == v.benefit && b.solver <= v.solver) =>
            {
                Some(b)
            }
            _ => Some(v),
        })
        .cloned()
}
