//! Gossip-based virtualization of a sensing request onto the swarm.
//!
//! The four phases run one after the other over the swarm graph:
//! [`run_search`] spreads the request and lets every reached sensor compute
//! its virtual domain, [`prune_domains`] removes virtual sensors whose
//! virtual neighbours cannot be hosted within `H` hops, and
//! [`build_benefit_matrices`] lets every sensor collect the `V` best benefit
//! rows it can hear of. Each sensor holding `V` rows then solves its own
//! assignment problem ([`solve_local_assignment`]) and the cloud keeps the
//! feasible solution of largest benefit ([`select_virtualization`]).
//!
//! Virtual sensors are numbered `0..V`; the hub of a star is virtual sensor 0.

mod assign;
mod benefit;
mod prune;
mod search;

use std::collections::BTreeSet;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

pub use assign::{
    benefit_upper_bound, select_virtualization, solve_local_assignment, total_benefit,
};
pub use benefit::{
    build_benefit_matrices, forwarded_row, initial_row, BenefitOutcome, BenefitState, CandidateRow,
};
pub use prune::{prune_domain, prune_domains, PruneOutcome};
pub use search::{run_search, SearchOutcome};

use crate::error::{Error, Result};
use crate::gossip::{GossipConfig, GossipEvent, GossipTrace};
use crate::rng::{derive_seed, SimRng, Stream};
use crate::swarm::{Sensor, Swarm};

/// Shape of the requested virtual network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    Complete,
    Cycle,
    Star,
}

impl Topology {
    /// Virtual links `(a, b)` with `a < b`.
    pub fn links(self, v_count: usize) -> Vec<(usize, usize)> {
        let mut links: Vec<(usize, usize)> = match self {
            Topology::Complete => (0..v_count)
                .flat_map(|a| (a + 1..v_count).map(move |b| (a, b)))
                .collect(),
            Topology::Cycle => match v_count {
                0 | 1 => Vec::new(),
                2 => vec![(0, 1)],
                _ => (0..v_count)
                    .map(|a| ordered(a, (a + 1) % v_count))
                    .collect(),
            },
            Topology::Star => (1..v_count).map(|b| (0, b)).collect(),
        };
        links.sort_unstable();
        links
    }

    pub fn name(self) -> &'static str {
        match self {
            Topology::Complete => "complete",
            Topology::Cycle => "cycle",
            Topology::Star => "star",
        }
    }
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" => Ok(Topology::Complete),
            "cycle" => Ok(Topology::Cycle),
            "star" => Ok(Topology::Star),
            other => Err(Error::invalid(format!("unknown topology {other:?}"))),
        }
    }
}

fn ordered(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// A virtual sensing request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VsnRequest {
    pub v_count: usize,
    pub topology: Topology,
    pub virtual_links: Vec<(usize, usize)>,
    /// Centre `ψ` of the task area.
    pub center: [f64; 2],
    /// Radius `Δ` of the task area.
    pub task_radius: f64,
    /// Capacity demand `d_j` of every virtual sensor.
    pub demands: Vec<f64>,
    /// Hop bound `H` on physical paths realizing a virtual link.
    pub hop_bound: usize,
    pub alpha: f64,
    pub beta: f64,
}

impl VsnRequest {
    /// Builds and validates a request; `V` is the number of demands.
    pub fn new(
        topology: Topology,
        center: [f64; 2],
        task_radius: f64,
        demands: Vec<f64>,
        hop_bound: usize,
        alpha: f64,
        beta: f64,
    ) -> Result<Self> {
        let v_count = demands.len();
        let request = VsnRequest {
            v_count,
            topology,
            virtual_links: topology.links(v_count),
            center,
            task_radius,
            demands,
            hop_bound,
            alpha,
            beta,
        };
        request.validate()?;
        Ok(request)
    }

    pub fn validate(&self) -> Result<()> {
        if self.v_count == 0 {
            return Err(Error::invalid("request needs at least one virtual sensor"));
        }
        if self.demands.len() != self.v_count {
            return Err(Error::invalid(format!(
                "{} demands for {} virtual sensors",
                self.demands.len(),
                self.v_count
            )));
        }
        if let Some(d) = self.demands.iter().find(|d| !(**d > 0.0) || !d.is_finite()) {
            return Err(Error::invalid(format!("demands must be positive, got {d}")));
        }
        let mut links: Vec<(usize, usize)> = self
            .virtual_links
            .iter()
            .map(|&(a, b)| ordered(a, b))
            .collect();
        links.sort_unstable();
        if links != self.topology.links(self.v_count) {
            return Err(Error::invalid(format!(
                "virtual links do not form a {} topology over {} sensors",
                self.topology, self.v_count
            )));
        }
        if !(self.task_radius >= 0.0) || !self.task_radius.is_finite() {
            return Err(Error::invalid(format!(
                "task radius must be non-negative, got {}",
                self.task_radius
            )));
        }
        if self.center.iter().any(|c| !c.is_finite()) {
            return Err(Error::invalid("task centre must be finite"));
        }
        if self.hop_bound == 0 {
            return Err(Error::invalid("hop bound must be positive"));
        }
        if !(self.alpha >= 0.0)
            || !(self.beta >= 0.0)
            || !self.alpha.is_finite()
            || !self.beta.is_finite()
        {
            return Err(Error::invalid(format!(
                "incentives must be non-negative, got alpha={}, beta={}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    /// Virtual sensors linked to `j`.
    pub fn virtual_neighbors(&self, j: usize) -> impl Iterator<Item = usize> + '_ {
        self.virtual_links.iter().filter_map(move |&(a, b)| {
            if a == j {
                Some(b)
            } else if b == j {
                Some(a)
            } else {
                None
            }
        })
    }
}

/// Virtual sensors a participatory sensor can host.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct VirtualDomain {
    pub owner: usize,
    pub members: BTreeSet<usize>,
}

impl VirtualDomain {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.members.contains(&j)
    }
}

/// Every virtual sensor whose demand fits the capacity, provided the sensor
/// lies within `Δ` of the task centre; empty otherwise.
pub fn compute_domain(sensor: &Sensor, request: &VsnRequest) -> VirtualDomain {
    let members = if sensor.distance_to(request.center) <= request.task_radius {
        (0..request.v_count)
            .filter(|&j| sensor.capacity >= request.demands[j])
            .collect()
    } else {
        BTreeSet::new()
    };
    VirtualDomain {
        owner: sensor.id,
        members,
    }
}

/// A selection of `V` sensors and their one-to-one mapping onto the virtual
/// sensors.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Virtualization {
    /// Selected sensor ids, ascending.
    pub selected: Vec<usize>,
    /// `mapping[j]`: sensor hosting virtual sensor `j`.
    pub mapping: Vec<usize>,
    /// Sensor that solved the assignment.
    pub solver: usize,
    /// Objective of the solver's local assignment problem.
    pub proxy_benefit: f64,
    /// Total benefit on the substrate, set by [`total_benefit`].
    pub benefit: f64,
    /// Every virtual link is realized within `H` hops; set by [`total_benefit`].
    pub feasible: bool,
}

impl Virtualization {
    /// Virtual sensor hosted by `sensor`, if selected.
    pub fn virtual_of(&self, sensor: usize) -> Option<usize> {
        self.mapping.iter().position(|&s| s == sensor)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Gossip settings of the three gossip phases.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RadvConfig {
    pub gossip: GossipConfig,
}

impl RadvConfig {
    pub fn for_population(population: usize) -> Self {
        RadvConfig {
            gossip: GossipConfig::for_population(population),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Search,
    Prune,
    Benefit,
}

/// Everything one virtualization attempt produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RadvOutcome {
    pub search: SearchOutcome,
    pub prune: PruneOutcome,
    pub benefit: BenefitOutcome,
    /// Evaluated local solutions, in solver order.
    pub solutions: Vec<Virtualization>,
    /// Best feasible solution; `None` means the request is rejected.
    pub selected: Option<Virtualization>,
    pub upper_bound: f64,
}

impl RadvOutcome {
    pub fn accepted(&self) -> bool {
        self.selected.is_some()
    }

    pub fn timed_out(&self) -> bool {
        self.search.timed_out || self.prune.timed_out || self.benefit.timed_out
    }

    /// Slots and messages of all three gossip phases together.
    pub fn combined_trace(&self) -> GossipTrace {
        let mut trace = self.search.trace.clone();
        trace.absorb(&self.prune.trace);
        trace.absorb(&self.benefit.trace);
        trace
    }
}

/// Receives every contact of [`virtualize`] with its phase.
pub type PhaseSink<'a> = &'a mut dyn FnMut(Phase, &GossipEvent);

/// Runs all phases. Each gossip phase draws from its own stream derived from
/// `seed`; `events` receives every contact tagged with its phase.
pub fn virtualize(
    swarm: &Swarm,
    request: &VsnRequest,
    seeds: &[usize],
    config: &RadvConfig,
    seed: u64,
    mut events: Option<PhaseSink<'_>>,
) -> Result<RadvOutcome> {
    request.validate()?;
    let rng = |stream| SimRng::seed_from_u64(derive_seed(seed, 0, stream));

    let search = {
        let mut sink = events
            .as_mut()
            .map(|f| move |e: &GossipEvent| f(Phase::Search, e));
        let sink = sink.as_mut().map(|s| s as &mut dyn FnMut(&GossipEvent));
        run_search(
            swarm,
            request,
            seeds,
            &config.gossip,
            &mut rng(Stream::Search),
            sink,
        )?
    };
    let prune = {
        let mut sink = events
            .as_mut()
            .map(|f| move |e: &GossipEvent| f(Phase::Prune, e));
        let sink = sink.as_mut().map(|s| s as &mut dyn FnMut(&GossipEvent));
        prune_domains(
            swarm,
            request,
            &search.domains,
            &config.gossip,
            &mut rng(Stream::Prune),
            sink,
        )?
    };
    let benefit = {
        let mut sink = events
            .as_mut()
            .map(|f| move |e: &GossipEvent| f(Phase::Benefit, e));
        let sink = sink.as_mut().map(|s| s as &mut dyn FnMut(&GossipEvent));
        build_benefit_matrices(
            swarm,
            request,
            &prune.domains,
            &config.gossip,
            &mut rng(Stream::Benefit),
            sink,
        )?
    };

    let mut solutions = Vec::new();
    for state in benefit
        .states
        .values()
        .filter(|s| s.len() == request.v_count)
    {
        if let Some(mut v) = solve_local_assignment(state, request)? {
            total_benefit(&mut v, swarm, request)?;
            solutions.push(v);
        }
    }
    let selected = select_virtualization(&solutions);
    Ok(RadvOutcome {
        search,
        prune,
        benefit,
        solutions,
        selected,
        upper_bound: benefit_upper_bound(request, swarm),
    })
}
