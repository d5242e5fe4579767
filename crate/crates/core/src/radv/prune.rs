//! Phase II: virtual domain pruning.
//!
//! Domains travel at most `H` hops from their owner. Whenever the exchange
//! falls quiet, every owner prunes its domain against the latest copies it
//! holds; owners whose domain shrank publish a new version and the exchange
//! resumes. The process stops once a pruning pass changes nothing. Copies are
//! replaced by newer versions and by the same version arriving over fewer
//! hops, so at quiescence every owner holds the current domain of every
//! eligible sensor within `H` hops, and the result is the greatest fixed point
//! of the pruning rule regardless of gossip order.

use std::collections::{BTreeMap, BTreeSet};

use super::{VirtualDomain, VsnRequest};
use crate::error::Result;
use crate::gossip::{
    run_protocol, trace_of, EventSink, GossipConfig, GossipTrace, Message, MessageKind, Protocol,
};
use crate::rng::SimRng;
use crate::swarm::Swarm;

#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    /// Pruned domain of every sensor that entered with a nonempty one.
    pub domains: BTreeMap<usize, VirtualDomain>,
    /// Exchange rounds, each followed by a pruning pass.
    pub rounds: usize,
    pub trace: GossipTrace,
    pub timed_out: bool,
}

/// Drops every `j` of `own` that has a virtual neighbour absent from all of
/// `received`.
pub fn prune_domain<'a>(
    own: &BTreeSet<usize>,
    received: impl IntoIterator<Item = &'a BTreeSet<usize>>,
    request: &VsnRequest,
) -> BTreeSet<usize> {
    let mut available = BTreeSet::new();
    for d in received {
        available.extend(d.iter().copied());
    }
    own.iter()
        .copied()
        .filter(|&j| request.virtual_neighbors(j).all(|k| available.contains(&k)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Held {
    version: usize,
    hops: usize,
}

impl Held {
    /// Whether a copy sent over one more hop would replace `held`.
    fn improves(self, held: Option<Held>) -> bool {
        match held {
            None => true,
            Some(h) => {
                self.version > h.version || (self.version == h.version && self.hops + 1 < h.hops)
            }
        }
    }
}

struct DomainGossip {
    hop_bound: usize,
    /// Eligible sensors, ascending.
    origins: Vec<usize>,
    /// `versions[k][v]`: content of version `v` of the `k`-th origin's domain.
    versions: Vec<Vec<BTreeSet<usize>>>,
    /// `held[n][k]`: copy of the `k`-th origin's domain held by sensor `n`.
    held: Vec<Vec<Option<Held>>>,
    /// Sensors with something new to spread in the current round.
    dirty: Vec<bool>,
}

impl DomainGossip {
    fn transfer(&mut self, from: usize, to: usize, out: &mut Vec<Message>) {
        for k in 0..self.origins.len() {
            if self.origins[k] == to {
                continue;
            }
            let Some(copy) = self.held[from][k] else {
                continue;
            };
            if copy.hops < self.hop_bound && copy.improves(self.held[to][k]) {
                self.held[to][k] = Some(Held {
                    version: copy.version,
                    hops: copy.hops + 1,
                });
                self.dirty[to] = true;
                out.push(Message::new(from, to, MessageKind::Domain));
            }
        }
    }

    fn current(&self, k: usize) -> &BTreeSet<usize> {
        self.versions[k].last().expect("every origin has a version")
    }

    /// One pruning pass; returns whether any domain changed.
    fn prune_pass(&mut self, request: &VsnRequest) -> bool {
        self.dirty.iter_mut().for_each(|d| *d = false);
        let mut updates = Vec::new();
        for (k, &owner) in self.origins.iter().enumerate() {
            let received = self.held[owner]
                .iter()
                .enumerate()
                .filter(|&(other, _)| other != k)
                .filter_map(|(other, copy)| copy.map(|c| &self.versions[other][c.version]));
            let pruned = prune_domain(self.current(k), received, request);
            if pruned != *self.current(k) {
                updates.push((k, owner, pruned));
            }
        }
        let changed = !updates.is_empty();
        for (k, owner, pruned) in updates {
            self.versions[k].push(pruned);
            self.held[owner][k] = Some(Held {
                version: self.versions[k].len() - 1,
                hops: 0,
            });
            self.dirty[owner] = true;
        }
        changed
    }
}

impl Protocol for DomainGossip {
    fn is_active(&self, sensor: usize) -> bool {
        self.dirty[sensor]
    }

    fn on_contact(&mut self, initiator: usize, target: usize) -> Vec<Message> {
        let mut out = Vec::new();
        self.transfer(initiator, target, &mut out);
        self.transfer(target, initiator, &mut out);
        out
    }
}

/// Prunes the domains found by the search. `config.max_slots` bounds the
/// slots of all rounds together.
pub fn prune_domains(
    swarm: &Swarm,
    request: &VsnRequest,
    domains: &BTreeMap<usize, VirtualDomain>,
    config: &GossipConfig,
    rng: &mut SimRng,
    mut events: Option<EventSink<'_>>,
) -> Result<PruneOutcome> {
    request.validate()?;
    let origins: Vec<usize> = domains
        .values()
        .filter(|d| !d.is_empty())
        .map(|d| d.owner)
        .collect();
    let mut held = vec![vec![None; origins.len()]; swarm.len()];
    let mut dirty = vec![false; swarm.len()];
    for (k, &o) in origins.iter().enumerate() {
        held[o][k] = Some(Held {
            version: 0,
            hops: 0,
        });
        dirty[o] = true;
    }
    let mut gossip = DomainGossip {
        hop_bound: request.hop_bound,
        versions: origins
            .iter()
            .map(|o| vec![domains[o].members.clone()])
            .collect(),
        origins,
        held,
        dirty,
    };

    let mut trace = GossipTrace::new(swarm.len());
    let mut rounds = 0;
    let mut timed_out = false;
    loop {
        rounds += 1;
        let budget = config
            .clone()
            .with_max_slots(config.max_slots.saturating_sub(trace.slots_used));
        let (round, round_timed_out) = trace_of(run_protocol(
            swarm,
            &mut gossip,
            &budget,
            rng,
            events.as_mut().map(|e| &mut **e as _),
        ));
        trace.absorb(&round);
        if round_timed_out {
            timed_out = true;
            gossip.prune_pass(request);
            break;
        }
        if !gossip.prune_pass(request) {
            break;
        }
    }

    let domains = gossip
        .origins
        .iter()
        .enumerate()
        .map(|(k, &owner)| {
            (
                owner,
                VirtualDomain {
                    owner,
                    members: gossip.current(k).clone(),
                },
            )
        })
        .collect();
    Ok(PruneOutcome {
        domains,
        rounds,
        trace,
        timed_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radv::Topology;
    use crate::rng::sim_rng;
    use crate::swarm::Sensor;

    fn pair_request() -> VsnRequest {
        VsnRequest::new(
            Topology::Complete,
            [0.5, 0.5],
            0.5,
            vec![30.0, 30.0],
            20,
            1.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn lone_endpoint_is_pruned() {
        let r = pair_request();
        let own = BTreeSet::from([0]);
        assert!(prune_domain(&own, std::iter::empty(), &r).is_empty());
    }

    #[test]
    fn endpoint_with_partner_survives() {
        let r = pair_request();
        let own = BTreeSet::from([0]);
        let other = BTreeSet::from([1]);
        assert_eq!(prune_domain(&own, [&other], &r), own);
    }

    #[test]
    fn own_domain_does_not_count() {
        let r = pair_request();
        let own = BTreeSet::from([0, 1]);
        assert!(prune_domain(&own, std::iter::empty(), &r).is_empty());
    }

    fn line(count: usize, spacing: f64) -> Swarm {
        let sensors = (0..count)
            .map(|id| Sensor {
                id,
                position: [0.1 + spacing * id as f64, 0.5],
                capacity: 100.0,
            })
            .collect();
        Swarm::from_sensors(sensors, spacing * 1.01).unwrap()
    }

    #[test]
    fn hop_bound_isolates_far_sensors() {
        // eligible sensors at both ends of a 6-sensor path, 5 hops apart
        let swarm = line(6, 0.1);
        let r = VsnRequest::new(
            Topology::Complete,
            [0.35, 0.5],
            1.0,
            vec![30.0, 30.0],
            4,
            1.0,
            1.0,
        )
        .unwrap();
        let domains: BTreeMap<usize, VirtualDomain> = [0, 5]
            .into_iter()
            .map(|owner| {
                (
                    owner,
                    VirtualDomain {
                        owner,
                        members: BTreeSet::from([0, 1]),
                    },
                )
            })
            .collect();
        let out = prune_domains(
            &swarm,
            &r,
            &domains,
            &GossipConfig::for_population(6),
            &mut sim_rng(3),
            None,
        )
        .unwrap();
        assert!(!out.timed_out);
        assert!(out.domains.values().all(|d| d.is_empty()));

        let near = VsnRequest { hop_bound: 5, ..r };
        let out = prune_domains(
            &swarm,
            &near,
            &domains,
            &GossipConfig::for_population(6),
            &mut sim_rng(3),
            None,
        )
        .unwrap();
        assert!(out.domains.values().all(|d| d.members.len() == 2));
        assert_eq!(out.rounds, 1);
    }

    #[test]
    fn pruning_cascades_over_rounds() {
        // path 0-1-2 eligible with D = {0}, {0,1}, {1,2}; cycle of three virtual sensors
        let swarm = line(3, 0.1);
        let r = VsnRequest::new(
            Topology::Cycle,
            [0.2, 0.5],
            1.0,
            vec![30.0; 3],
            20,
            1.0,
            1.0,
        )
        .unwrap();
        let sets = [
            BTreeSet::from([0]),
            BTreeSet::from([0, 1]),
            BTreeSet::from([1, 2]),
        ];
        let domains: BTreeMap<usize, VirtualDomain> = sets
            .iter()
            .enumerate()
            .map(|(owner, m)| {
                (
                    owner,
                    VirtualDomain {
                        owner,
                        members: m.clone(),
                    },
                )
            })
            .collect();
        let out = prune_domains(
            &swarm,
            &r,
            &domains,
            &GossipConfig::for_population(3),
            &mut sim_rng(0),
            None,
        )
        .unwrap();
        // sensor 2 drops 1 in the first pass, which makes sensor 1 drop 0 in the second
        let expected: Vec<BTreeSet<usize>> = {
            let mut d = sets.to_vec();
            loop {
                let next: Vec<BTreeSet<usize>> = (0..3)
                    .map(|n| prune_domain(&d[n], (0..3).filter(|&o| o != n).map(|o| &d[o]), &r))
                    .collect();
                if next == d {
                    break d;
                }
                d = next;
            }
        };
        for (owner, dom) in &out.domains {
            assert_eq!(dom.members, expected[*owner]);
        }
        assert!(out.rounds >= 2);
    }
}
