//! End-to-end replications: swarm, request, virtualization, estimation.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use super::scenario::{Algorithm, CenterPolicy, Scenario};
use crate::error::{Error, Result};
use crate::gossip::{GossipConfig, GossipEvent};
use crate::rade::{admm_run, rade_run, Coupling, EstimatorConfig, ToleranceSpec};
use crate::radv::{virtualize, Phase, PhaseSink, RadvConfig, Topology, VsnRequest};
use crate::rng::{derive_seed, SimRng, Stream};
use crate::sensing::{centralized_ls, generate_estimation_task, mse};
use crate::swarm::generate_swarm;

/// One estimator run on an accepted request.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorRecord {
    pub algo: Algorithm,
    pub noise_variance: f64,
    /// Rounds, gossip slots, or 0 for least squares.
    pub iterations: u64,
    /// Vectors sent; for least squares the `V·m/n` upload equivalent.
    pub messages: u64,
    pub mse: f64,
    pub converged: bool,
}

/// Metrics of one replication at one grid point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRecord {
    pub scenario_id: String,
    pub replication: u64,
    /// Seed every random stream of the replication derives from.
    pub seed: u64,
    pub sensors: usize,
    pub v_count: usize,
    pub topology: Topology,
    pub accepted: bool,
    pub benefit: Option<f64>,
    pub upper_bound: Option<f64>,
    pub search_slots: u64,
    /// Slots until the request reached every sensor it could reach.
    pub spread_slots: u64,
    pub prune_slots: u64,
    pub benefit_slots: u64,
    /// Mean messages per sensor over the three gossip phases.
    pub msgs_per_sensor: f64,
    pub virtualization_messages: u64,
    /// Gossip messages plus every estimator's messages.
    pub total_messages: u64,
    pub gossip_timed_out: bool,
    pub estimators: Vec<EstimatorRecord>,
    pub error: Option<String>,
}

/// Swarm size and topology of one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridPoint {
    pub sensors: usize,
    pub topology: Topology,
}

impl Scenario {
    /// Grid points, swarm size varying slowest.
    pub fn grid(&self) -> Vec<GridPoint> {
        self.sensors
            .iter()
            .flat_map(|&sensors| {
                self.topology
                    .iter()
                    .map(move |&topology| GridPoint { sensors, topology })
            })
            .collect()
    }

    /// Seed of replication `index`.
    pub fn replication_seed(&self, index: u64) -> u64 {
        self.seed.wrapping_add(index)
    }

    fn estimator_config(&self) -> Result<EstimatorConfig> {
        let config = EstimatorConfig {
            tolerance: ToleranceSpec::new(self.eps_abs, self.eps_rel)?,
            rho: self.rho,
            max_iters: self.estimator_max_iters,
            max_slots: self.estimator_max_slots,
            ..EstimatorConfig::default()
        };
        config.validate()?;
        Ok(config)
    }
}

fn sample_request(scenario: &Scenario, topology: Topology, rng: &mut SimRng) -> Result<VsnRequest> {
    let center = match scenario.center_policy {
        CenterPolicy::Inset => {
            let lo = scenario.task_radius.min(0.5);
            let hi = 1.0 - lo;
            [
                lo + (hi - lo) * rng.random::<f64>(),
                lo + (hi - lo) * rng.random::<f64>(),
            ]
        }
        CenterPolicy::Anywhere => [rng.random::<f64>(), rng.random::<f64>()],
    };
    let (lo, hi) = (scenario.demand_low, scenario.demand_high);
    let demands = (0..scenario.v_count)
        .map(|_| {
            if lo < hi {
                rng.random_range(lo..=hi)
            } else {
                lo
            }
        })
        .collect();
    VsnRequest::new(
        topology,
        center,
        scenario.task_radius,
        demands,
        scenario.hop_bound,
        scenario.alpha,
        scenario.beta,
    )
}

fn estimate(
    scenario: &Scenario,
    request: &VsnRequest,
    seed: u64,
    record: &mut MetricRecord,
) -> Result<()> {
    let config = scenario.estimator_config()?;
    let coupling = Coupling::from_links(request.v_count, &request.virtual_links)?;
    for (k, &variance) in scenario.noise_variance.iter().enumerate() {
        let task = generate_estimation_task(
            scenario.params,
            scenario.measurements,
            request.v_count,
            variance.sqrt(),
            derive_seed(seed, k as u64, Stream::Task),
        )?;
        for &algo in &scenario.algorithms {
            let entry = match algo {
                Algorithm::Ls => {
                    let est = centralized_ls(&task)?;
                    let uploads =
                        (request.v_count * scenario.measurements).div_ceil(scenario.params);
                    EstimatorRecord {
                        algo,
                        noise_variance: variance,
                        iterations: 0,
                        messages: uploads as u64,
                        mse: mse(&est, &task.theta_true)?,
                        converged: true,
                    }
                }
                Algorithm::Admm | Algorithm::Rade => {
                    let out = if algo == Algorithm::Admm {
                        admm_run(&coupling, &task, &config)?
                    } else {
                        rade_run(
                            &coupling,
                            &task,
                            &config,
                            derive_seed(seed, k as u64, Stream::Rade),
                            None,
                        )?
                    };
                    EstimatorRecord {
                        algo,
                        noise_variance: variance,
                        iterations: out.iterations,
                        messages: out.messages,
                        mse: out.mse(&task.theta_true)?,
                        converged: out.converged,
                    }
                }
            };
            record.total_messages += entry.messages;
            record.estimators.push(entry);
        }
    }
    Ok(())
}

fn replicate(
    scenario: &Scenario,
    point: GridPoint,
    seed: u64,
    record: &mut MetricRecord,
    events: Option<PhaseSink<'_>>,
) -> Result<()> {
    let swarm = generate_swarm(
        point.sensors,
        scenario.radius,
        scenario.capacity_low,
        scenario.capacity_high,
        derive_seed(seed, 0, Stream::Swarm),
    )?;
    let mut rng = SimRng::seed_from_u64(derive_seed(seed, 0, Stream::Request));
    let request = sample_request(scenario, point.topology, &mut rng)?;
    let seeds = sample(&mut rng, point.sensors, scenario.search_seeds).into_vec();

    let gossip = GossipConfig::for_population(point.sensors);
    let gossip = match scenario.max_slots {
        Some(slots) => gossip.with_max_slots(slots),
        None => gossip,
    };
    let outcome = virtualize(
        &swarm,
        &request,
        &seeds,
        &RadvConfig { gossip },
        seed,
        events,
    )?;
    let trace = outcome.combined_trace();
    record.search_slots = outcome.search.trace.slots_used;
    record.spread_slots = outcome.search.spread_slots;
    record.prune_slots = outcome.prune.trace.slots_used;
    record.benefit_slots = outcome.benefit.trace.slots_used;
    record.msgs_per_sensor = trace.mean_messages_per_sensor();
    record.virtualization_messages = trace.total_messages;
    record.total_messages = trace.total_messages;
    record.gossip_timed_out = outcome.timed_out();
    record.upper_bound = Some(outcome.upper_bound);
    if let Some(v) = &outcome.selected {
        record.accepted = true;
        record.benefit = Some(v.benefit);
        estimate(scenario, &request, seed, record)?;
    }
    Ok(())
}

/// Runs replication `index` at `point`. A failure is recorded in the
/// returned record instead of being raised.
pub fn run_replication(
    scenario: &Scenario,
    point: GridPoint,
    index: u64,
    events: Option<PhaseSink<'_>>,
) -> MetricRecord {
    let seed = scenario.replication_seed(index);
    let mut record = MetricRecord {
        scenario_id: scenario.id.clone(),
        replication: index,
        seed,
        sensors: point.sensors,
        v_count: scenario.v_count,
        topology: point.topology,
        accepted: false,
        benefit: None,
        upper_bound: None,
        search_slots: 0,
        spread_slots: 0,
        prune_slots: 0,
        benefit_slots: 0,
        msgs_per_sensor: 0.0,
        virtualization_messages: 0,
        total_messages: 0,
        gossip_timed_out: false,
        estimators: Vec::new(),
        error: None,
    };
    if let Err(e) = replicate(scenario, point, seed, &mut record, events) {
        record.accepted = false;
        record.benefit = None;
        record.estimators.clear();
        record.error = Some(e.to_string());
    }
    record
}

fn jobs(scenario: &Scenario) -> Vec<(GridPoint, u64)> {
    scenario
        .grid()
        .into_iter()
        .flat_map(|p| (0..scenario.replications).map(move |i| (p, i)))
        .collect()
}

/// Every replication at every grid point, ordered by grid point and then by
/// replication index.
pub fn run_experiment(scenario: &Scenario) -> Result<Vec<MetricRecord>> {
    scenario.validate()?;
    Ok(jobs(scenario)
        .into_iter()
        .map(|(p, i)| run_replication(scenario, p, i, None))
        .collect())
}

/// As [`run_experiment`], spread over `threads` worker threads. The output
/// does not depend on the thread count.
pub fn run_experiment_parallel(scenario: &Scenario, threads: usize) -> Result<Vec<MetricRecord>> {
    use rayon::prelude::*;
    scenario.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidState(format!("cannot start worker threads: {e}")))?;
    let jobs = jobs(scenario);
    Ok(pool.install(|| {
        jobs.par_iter()
            .map(|&(p, i)| run_replication(scenario, p, i, None))
            .collect()
    }))
}

/// Sequential run reporting every gossip contact to `sink`.
pub fn run_experiment_with_events(
    scenario: &Scenario,
    sink: &mut dyn FnMut(&MetricRecordKey, Phase, &GossipEvent),
) -> Result<Vec<MetricRecord>> {
    scenario.validate()?;
    Ok(jobs(scenario)
        .into_iter()
        .map(|(p, i)| {
            let key = MetricRecordKey {
                sensors: p.sensors,
                topology: p.topology,
                replication: i,
            };
            let mut forward = |phase: Phase, e: &GossipEvent| sink(&key, phase, e);
            run_replication(scenario, p, i, Some(&mut forward))
        })
        .collect())
}

/// Identifies the replication an event belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MetricRecordKey {
    pub sensors: usize,
    pub topology: Topology,
    pub replication: u64,
}
