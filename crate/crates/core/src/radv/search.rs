//! Phase I: spreading the request and computing virtual domains.

use std::collections::{BTreeMap, BTreeSet};

use super::{compute_domain, VirtualDomain, VsnRequest};
use crate::error::{Error, Result};
use crate::gossip::{
    run_protocol, trace_of, Epidemic, EventSink, GossipConfig, GossipEvent, GossipTrace,
};
use crate::rng::SimRng;
use crate::swarm::Swarm;

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    /// Domain of every sensor the request reached.
    pub domains: BTreeMap<usize, VirtualDomain>,
    /// Reached sensors with a nonempty domain.
    pub eligible: BTreeSet<usize>,
    pub trace: GossipTrace,
    /// Slots until the last reached sensor learned the request; the run
    /// itself lasts until every sensor has heard back from its neighbours.
    pub spread_slots: u64,
    pub timed_out: bool,
}

/// Push/pull epidemic of the request from `seeds`.
pub fn run_search(
    swarm: &Swarm,
    request: &VsnRequest,
    seeds: &[usize],
    config: &GossipConfig,
    rng: &mut SimRng,
    events: Option<EventSink<'_>>,
) -> Result<SearchOutcome> {
    if seeds.is_empty() {
        return Err(Error::invalid("search needs at least one seed sensor"));
    }
    if let Some(s) = seeds.iter().find(|&&s| s >= swarm.len()) {
        return Err(Error::invalid(format!("seed sensor {s} outside the swarm")));
    }
    let mut epidemic = Epidemic::new(swarm.len(), seeds);
    let mut events = events;
    let mut spread_slots = 0;
    let mut watch = |e: &GossipEvent| {
        if !e.kinds.is_empty() {
            spread_slots = e.slot + 1;
        }
        if let Some(sink) = events.as_mut() {
            sink(e);
        }
    };
    let (trace, timed_out) = trace_of(run_protocol(
        swarm,
        &mut epidemic,
        config,
        rng,
        Some(&mut watch),
    ));
    let domains: BTreeMap<usize, VirtualDomain> = swarm
        .sensors()
        .iter()
        .filter(|s| epidemic.informed()[s.id])
        .map(|s| (s.id, compute_domain(s, request)))
        .collect();
    let eligible = domains
        .values()
        .filter(|d| !d.is_empty())
        .map(|d| d.owner)
        .collect();
    Ok(SearchOutcome {
        domains,
        eligible,
        trace,
        spread_slots,
        timed_out,
    })
}
