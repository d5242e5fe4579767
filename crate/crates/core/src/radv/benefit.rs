//! Phase III: distributed construction of benefit matrices.
//!
//! Every sensor `n` keeps at most `V` candidate rows `p_i^(n)`. A row loses
//! `β/H` on each of its domain entries per hop travelled, never dropping
//! below zero. A row is sent only when the receiver would keep it: a new
//! candidate needs a total above the receiver's `p_min`, a known one needs a
//! total above the row already held. Sending rows the receiver would discard
//! could never fall quiet.

use std::collections::BTreeMap;

use serde::Serialize;

use super::{VirtualDomain, VsnRequest};
use crate::error::{Error, Result};
use crate::gossip::{
    run_protocol, trace_of, EventSink, GossipConfig, GossipTrace, Message, MessageKind, Protocol,
};
use crate::rng::SimRng;
use crate::swarm::Swarm;

/// Benefit row of one candidate as seen by the holder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateRow {
    pub row: Vec<f64>,
    /// `mask[j]`: `j` is in the candidate's domain.
    pub mask: Vec<bool>,
    /// Hops from the candidate to the holder along the path the row took.
    pub hops: usize,
}

impl CandidateRow {
    pub fn total(&self) -> f64 {
        self.row.iter().sum()
    }
}

/// `α(c − d_j)/c + β` for `j` in the domain, 0 elsewhere.
pub fn initial_row(capacity: f64, domain: &VirtualDomain, request: &VsnRequest) -> Vec<f64> {
    (0..request.v_count)
        .map(|j| {
            if domain.contains(j) {
                request.alpha * (capacity - request.demands[j]) / capacity + request.beta
            } else {
                0.0
            }
        })
        .collect()
}

/// The row after one more hop: `β/H` less on domain entries, floored at 0.
pub fn forwarded_row(row: &[f64], mask: &[bool], request: &VsnRequest) -> Vec<f64> {
    let step = request.beta / request.hop_bound as f64;
    row.iter()
        .zip(mask)
        .map(|(&p, &m)| if m { (p - step).max(0.0) } else { 0.0 })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenefitState {
    pub owner: usize,
    /// Candidate set `A^(n)` with the rows held for it.
    pub rows: BTreeMap<usize, CandidateRow>,
    /// Smallest candidate total once `V` candidates are held, else 0.
    pub min_total: f64,
    pub min_candidate: Option<usize>,
    v_count: usize,
}

impl BenefitState {
    pub fn new(owner: usize, v_count: usize) -> Self {
        BenefitState {
            owner,
            rows: BTreeMap::new(),
            min_total: 0.0,
            min_candidate: None,
            v_count,
        }
    }

    /// State of a sensor with a nonempty domain before any exchange.
    pub fn seeded(
        owner: usize,
        capacity: f64,
        domain: &VirtualDomain,
        request: &VsnRequest,
    ) -> Self {
        let mut state = BenefitState::new(owner, request.v_count);
        let mask = (0..request.v_count).map(|j| domain.contains(j)).collect();
        state.rows.insert(
            owner,
            CandidateRow {
                row: initial_row(capacity, domain, request),
                mask,
                hops: 0,
            },
        );
        state.refresh_min();
        state
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.rows.len() == self.v_count
    }

    pub fn candidates(&self) -> impl Iterator<Item = usize> + '_ {
        self.rows.keys().copied()
    }

    /// Whether [`offer`](Self::offer) would change the state.
    pub fn would_accept(&self, candidate: usize, total: f64) -> bool {
        match self.rows.get(&candidate) {
            Some(held) => total > held.total(),
            None => total > self.min_total,
        }
    }

    /// Applies a received row; returns whether it was kept.
    pub fn offer(&mut self, candidate: usize, row: CandidateRow) -> bool {
        if !self.would_accept(candidate, row.total()) {
            return false;
        }
        if !self.rows.contains_key(&candidate) && self.is_full() {
            let evicted = self.min_candidate.expect("full state tracks its minimum");
            self.rows.remove(&evicted);
        }
        self.rows.insert(candidate, row);
        self.refresh_min();
        true
    }

    fn refresh_min(&mut self) {
        if self.is_full() {
            // lowest total, then lowest id
            let (id, total) = self
                .rows
                .iter()
                .map(|(&i, r)| (i, r.total()))
                .fold(None, |best: Option<(usize, f64)>, (i, t)| match best {
                    Some((_, bt)) if bt <= t => best,
                    _ => Some((i, t)),
                })
                .expect("full state is nonempty");
            self.min_candidate = Some(id);
            self.min_total = total;
        } else {
            self.min_candidate = None;
            self.min_total = 0.0;
        }
    }
}

struct BenefitGossip<'a> {
    request: &'a VsnRequest,
    states: Vec<BenefitState>,
}

impl BenefitGossip<'_> {
    fn transfer(&mut self, from: usize, to: usize, out: &mut Vec<Message>) {
        let receiver = &self.states[to];
        let offers: Vec<(usize, CandidateRow)> = self.states[from]
            .rows
            .iter()
            .filter(|&(&i, r)| i != to && r.hops < self.request.hop_bound)
            .filter_map(|(&i, r)| {
                let row = forwarded_row(&r.row, &r.mask, self.request);
                let total: f64 = row.iter().sum();
                receiver.would_accept(i, total).then(|| {
                    (
                        i,
                        CandidateRow {
                            row,
                            mask: r.mask.clone(),
                            hops: r.hops + 1,
                        },
                    )
                })
            })
            .collect();
        for (i, row) in offers {
            if self.states[to].offer(i, row) {
                out.push(Message::new(from, to, MessageKind::BenefitRow));
            }
        }
    }
}

impl Protocol for BenefitGossip<'_> {
    fn is_active(&self, sensor: usize) -> bool {
        !self.states[sensor].is_empty()
    }

    fn on_contact(&mut self, initiator: usize, target: usize) -> Vec<Message> {
        let mut out = Vec::new();
        self.transfer(initiator, target, &mut out);
        self.transfer(target, initiator, &mut out);
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenefitOutcome {
    /// Final state of every sensor holding at least one candidate.
    pub states: BTreeMap<usize, BenefitState>,
    pub trace: GossipTrace,
    pub timed_out: bool,
}

pub fn build_benefit_matrices(
    swarm: &Swarm,
    request: &VsnRequest,
    domains: &BTreeMap<usize, VirtualDomain>,
    config: &GossipConfig,
    rng: &mut SimRng,
    events: Option<EventSink<'_>>,
) -> Result<BenefitOutcome> {
    request.validate()?;
    let mut states: Vec<BenefitState> = (0..swarm.len())
        .map(|n| BenefitState::new(n, request.v_count))
        .collect();
    for d in domains.values().filter(|d| !d.is_empty()) {
        let sensor = swarm.sensor(d.owner)?;
        if sensor.capacity <= 0.0 {
            return Err(Error::invalid(format!(
                "sensor {} has no capacity",
                d.owner
            )));
        }
        states[d.owner] = BenefitState::seeded(d.owner, sensor.capacity, d, request);
    }
    let mut gossip = BenefitGossip { request, states };
    let (trace, timed_out) = trace_of(run_protocol(swarm, &mut gossip, config, rng, events));
    let states = gossip
        .states
        .into_iter()
        .filter(|s| !s.is_empty())
        .map(|s| (s.owner, s))
        .collect();
    Ok(BenefitOutcome {
        states,
        trace,
        timed_out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::radv::Topology;
    use std::collections::BTreeSet;

    fn request(v: usize) -> VsnRequest {
        VsnRequest::new(
            Topology::Complete,
            [0.5, 0.5],
            0.2,
            vec![50.0; v],
            20,
            1.0,
            1.0,
        )
        .unwrap()
    }

    fn full_domain(owner: usize, v: usize) -> VirtualDomain {
        VirtualDomain {
            owner,
            members: (0..v).collect(),
        }
    }

    #[test]
    fn initial_and_forwarded_entries() {
        let r = request(2);
        let row = initial_row(100.0, &full_domain(0, 2), &r);
        assert_eq!(row, vec![1.5, 1.5]);
        let fwd = forwarded_row(&row, &[true, true], &r);
        assert!(fwd.iter().all(|p| (p - 1.45).abs() < 1e-15));
    }

    #[test]
    fn entries_outside_domain_stay_zero() {
        let r = request(3);
        let d = VirtualDomain {
            owner: 0,
            members: BTreeSet::from([1]),
        };
        let row = initial_row(100.0, &d, &r);
        assert_eq!(row, vec![0.0, 1.5, 0.0]);
        assert_eq!(forwarded_row(&row, &[false, true, false], &r)[0], 0.0);
    }

    #[test]
    fn decrement_floors_at_zero() {
        let r = VsnRequest {
            beta: 10.0,
            hop_bound: 2,
            ..request(1)
        };
        assert_eq!(forwarded_row(&[3.0], &[true], &r), vec![0.0]);
    }

    fn cand(total: f64, hops: usize) -> CandidateRow {
        CandidateRow {
            row: vec![total / 2.0, total / 2.0],
            mask: vec![true, true],
            hops,
        }
    }

    #[test]
    fn candidates_fill_then_replace_minimum() {
        let mut s = BenefitState::new(9, 2);
        assert!(s.offer(1, cand(2.0, 1)));
        assert_eq!(s.min_total, 0.0);
        assert!(s.offer(2, cand(3.0, 1)));
        assert_eq!((s.min_candidate, s.min_total), (Some(1), 2.0));
        assert!(!s.offer(3, cand(2.0, 1)));
        assert!(s.offer(3, cand(2.5, 1)));
        assert_eq!(s.candidates().collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!((s.min_candidate, s.min_total), (Some(3), 2.5));
    }

    #[test]
    fn known_candidate_keeps_larger_row() {
        let mut s = BenefitState::new(9, 2);
        s.offer(1, cand(2.0, 3));
        assert!(!s.offer(1, cand(2.0, 1)));
        assert_eq!(s.rows[&1].hops, 3);
        assert!(s.offer(1, cand(2.2, 1)));
        assert_eq!(s.rows[&1].hops, 1);
    }

    #[test]
    fn minimum_ties_evict_lowest_id() {
        let mut s = BenefitState::new(9, 2);
        s.offer(4, cand(2.0, 1));
        s.offer(2, cand(2.0, 1));
        assert_eq!(s.min_candidate, Some(2));
    }
}
