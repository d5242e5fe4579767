//! Time-slotted randomized gossip engine.
//!
//! At every slot each active sensor samples one outcome from its transition
//! row (`1/(deg+1)` for itself and each neighbour). Sampling itself means
//! staying silent; sampling a neighbour opens a contact, which the protocol
//! turns into zero or more push/pull messages. Contacts within a slot are
//! processed in initiator-id order and a target may be contacted by several
//! initiators in the same slot unless [`ContactRule::DisjointPairs`] is used.

use std::fmt;

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

/// Undirected graph over which contacts are sampled.
pub trait ContactGraph {
    fn node_count(&self) -> usize;
    /// Sorted neighbour list of `i`.
    fn neighbors(&self, i: usize) -> &[usize];
}

/// Plain adjacency-list graph, used for virtual topologies and tests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyGraph {
    adjacency: Vec<Vec<usize>>,
}

impl AdjacencyGraph {
    pub fn from_edges(node_count: usize, edges: &[(usize, usize)]) -> Self {
        let mut adjacency = vec![Vec::new(); node_count];
        for &(a, b) in edges {
            assert!(
                a < node_count && b < node_count,
                "edge ({a}, {b}) out of range"
            );
            if a != b {
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        for row in &mut adjacency {
            row.sort_unstable();
            row.dedup();
        }
        AdjacencyGraph { adjacency }
    }
}

impl ContactGraph for AdjacencyGraph {
    fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    fn neighbors(&self, i: usize) -> &[usize] {
        &self.adjacency[i]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    /// The virtual sensing request itself.
    Request,
    /// A virtual domain.
    Domain,
    /// A benefit vector.
    BenefitRow,
    /// A primal estimate.
    Theta,
    /// An auxiliary (consensus) variable.
    Z,
}

/// Payload size of a message, in vector lengths.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeClass {
    /// O(V): request descriptors, domains and benefit rows.
    VirtualCount,
    /// O(n): estimator variables.
    ParamCount,
}

impl MessageKind {
    pub fn size_class(self) -> SizeClass {
        match self {
            MessageKind::Request | MessageKind::Domain | MessageKind::BenefitRow => {
                SizeClass::VirtualCount
            }
            MessageKind::Theta | MessageKind::Z => SizeClass::ParamCount,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Message {
    pub from: usize,
    pub to: usize,
    pub kind: MessageKind,
}

impl Message {
    pub fn new(from: usize, to: usize, kind: MessageKind) -> Self {
        Message { from, to, kind }
    }
}

/// Push/pull discipline of a gossip protocol.
pub trait Protocol {
    /// Whether `sensor` currently has a reason to initiate contacts. Inactive
    /// sensors can still be contacted.
    fn is_active(&self, sensor: usize) -> bool;

    /// Executes the exchange of a contact and returns the messages sent, in
    /// order. Must be deterministic given the protocol state.
    fn on_contact(&mut self, initiator: usize, target: usize) -> Vec<Message>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Contact {
    pub initiator: usize,
    pub target: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContactRule {
    /// Every sampled contact is executed.
    #[default]
    Multiple,
    /// A sensor takes part in at most one contact per slot; later contacts
    /// touching an engaged sensor are dropped.
    DisjointPairs,
}

/// When an awake sensor falls silent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StopRule {
    /// Silent once every neighbour has answered an empty exchange since the
    /// sensor's own state last changed. Quiescence then implies no further
    /// exchange is possible across any link.
    #[default]
    AllNeighborsCurrent,
    /// Silent after the first contact that exchanges nothing.
    FirstEmptyContact,
    /// Activity is governed by [`Protocol::is_active`] alone.
    Never,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GossipConfig {
    pub max_slots: u64,
    pub stop_rule: StopRule,
    pub contact_rule: ContactRule,
}

const MIN_SLOTS: u64 = 1000;

impl GossipConfig {
    /// Default slot budget `10 * P * log2(P)`, at least 1000 so that tiny
    /// swarms still get room for several exchange rounds.
    pub fn default_max_slots(population: usize) -> u64 {
        let p = population.max(2) as f64;
        ((10.0 * p * p.log2()).ceil() as u64).max(MIN_SLOTS)
    }

    pub fn for_population(population: usize) -> Self {
        GossipConfig {
            max_slots: Self::default_max_slots(population),
            stop_rule: StopRule::default(),
            contact_rule: ContactRule::default(),
        }
    }

    pub fn with_max_slots(mut self, max_slots: u64) -> Self {
        self.max_slots = max_slots;
        self
    }

    pub fn with_stop_rule(mut self, stop_rule: StopRule) -> Self {
        self.stop_rule = stop_rule;
        self
    }

    pub fn with_contact_rule(mut self, contact_rule: ContactRule) -> Self {
        self.contact_rule = contact_rule;
        self
    }
}

/// Slot and message counters of one gossip run.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct GossipTrace {
    pub slots_used: u64,
    pub messages_per_sensor: Vec<u64>,
    pub total_messages: u64,
}

impl GossipTrace {
    pub fn new(population: usize) -> Self {
        GossipTrace {
            slots_used: 0,
            messages_per_sensor: vec![0; population],
            total_messages: 0,
        }
    }

    pub fn record(&mut self, sender: usize) {
        self.messages_per_sensor[sender] += 1;
        self.total_messages += 1;
    }

    /// Appends a later run over the same population.
    pub fn absorb(&mut self, other: &GossipTrace) {
        self.slots_used += other.slots_used;
        for (a, b) in self
            .messages_per_sensor
            .iter_mut()
            .zip(&other.messages_per_sensor)
        {
            *a += b;
        }
        self.total_messages += other.total_messages;
    }

    pub fn mean_messages_per_sensor(&self) -> f64 {
        if self.messages_per_sensor.is_empty() {
            0.0
        } else {
            self.total_messages as f64 / self.messages_per_sensor.len() as f64
        }
    }
}

/// The slot budget ran out while sensors were still active.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub struct GossipTimeout {
    pub trace: GossipTrace,
}

impl fmt::Display for GossipTimeout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gossip still active after {} slots",
            self.trace.slots_used
        )
    }
}

/// Splits a run result into the trace and a timed-out flag.
pub fn trace_of(run: Result<GossipTrace, GossipTimeout>) -> (GossipTrace, bool) {
    match run {
        Ok(trace) => (trace, false),
        Err(GossipTimeout { trace }) => (trace, true),
    }
}

/// One contact of the optional event log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GossipEvent {
    pub slot: u64,
    pub initiator: usize,
    pub target: usize,
    pub kinds: Vec<MessageKind>,
}

pub type EventSink<'a> = &'a mut dyn FnMut(&GossipEvent);

/// Samples the contacts of one slot. `active` must be sorted ascending; every
/// active sensor consumes exactly one draw regardless of the contact rule.
pub fn schedule_slot<G, R>(
    graph: &G,
    active: &[usize],
    rule: ContactRule,
    rng: &mut R,
) -> Vec<Contact>
where
    G: ContactGraph + ?Sized,
    R: Rng + ?Sized,
{
    let mut contacts = Vec::new();
    let mut engaged = match rule {
        ContactRule::Multiple => Vec::new(),
        ContactRule::DisjointPairs => vec![false; graph.node_count()],
    };
    for &i in active {
        let neighbors = graph.neighbors(i);
        let pick = rng.random_range(0..=neighbors.len());
        let Some(&target) = neighbors.get(pick) else {
            continue;
        };
        if rule == ContactRule::DisjointPairs {
            if engaged[i] || engaged[target] {
                continue;
            }
            engaged[i] = true;
            engaged[target] = true;
        }
        contacts.push(Contact {
            initiator: i,
            target,
        });
    }
    contacts
}

/// Runs `protocol` until no sensor is both awake and protocol-active, or until
/// `config.max_slots` slots have elapsed.
pub fn run_protocol<G, P, R>(
    graph: &G,
    protocol: &mut P,
    config: &GossipConfig,
    rng: &mut R,
    mut events: Option<EventSink<'_>>,
) -> Result<GossipTrace, GossipTimeout>
where
    G: ContactGraph + ?Sized,
    P: Protocol + ?Sized,
    R: Rng + ?Sized,
{
    let n = graph.node_count();
    let mut trace = GossipTrace::new(n);
    let mut awake: Vec<bool> = (0..n).map(|i| !graph.neighbors(i).is_empty()).collect();
    // synced[i][k]: empty exchange with the k-th neighbour since i last changed
    let mut synced: Vec<Vec<bool>> = (0..n)
        .map(|i| vec![false; graph.neighbors(i).len()])
        .collect();
    let mut synced_count = vec![0usize; n];

    loop {
        let active: Vec<usize> = (0..n)
            .filter(|&i| awake[i] && protocol.is_active(i))
            .collect();
        if active.is_empty() {
            return Ok(trace);
        }
        if trace.slots_used >= config.max_slots {
            return Err(GossipTimeout { trace });
        }
        let slot = trace.slots_used;
        trace.slots_used += 1;

        for Contact { initiator, target } in schedule_slot(graph, &active, config.contact_rule, rng)
        {
            let messages = protocol.on_contact(initiator, target);
            for m in &messages {
                trace.record(m.from);
                if !graph.neighbors(m.to).is_empty() {
                    awake[m.to] = true;
                }
                if synced_count[m.to] > 0 {
                    synced[m.to].iter_mut().for_each(|s| *s = false);
                    synced_count[m.to] = 0;
                }
            }
            if messages.is_empty() {
                match config.stop_rule {
                    StopRule::FirstEmptyContact => awake[initiator] = false,
                    StopRule::AllNeighborsCurrent => {
                        let neighbors = graph.neighbors(initiator);
                        if let Ok(k) = neighbors.binary_search(&target) {
                            if !synced[initiator][k] {
                                synced[initiator][k] = true;
                                synced_count[initiator] += 1;
                            }
                        }
                        if synced_count[initiator] == neighbors.len() {
                            awake[initiator] = false;
                        }
                    }
                    StopRule::Never => {}
                }
            }
            if let Some(sink) = events.as_mut() {
                sink(&GossipEvent {
                    slot,
                    initiator,
                    target,
                    kinds: messages.iter().map(|m| m.kind).collect(),
                });
            }
        }
    }
}

/// Push/pull rumour spreading of a single item.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Epidemic {
    informed: Vec<bool>,
}

impl Epidemic {
    pub fn new(population: usize, seeds: &[usize]) -> Self {
        let mut informed = vec![false; population];
        for &s in seeds {
            informed[s] = true;
        }
        Epidemic { informed }
    }

    pub fn informed(&self) -> &[bool] {
        &self.informed
    }

    pub fn informed_count(&self) -> usize {
        self.informed.iter().filter(|&&b| b).count()
    }
}

impl Protocol for Epidemic {
    fn is_active(&self, sensor: usize) -> bool {
        self.informed[sensor]
    }

    fn on_contact(&mut self, initiator: usize, target: usize) -> Vec<Message> {
        match (self.informed[initiator], self.informed[target]) {
            (true, false) => {
                self.informed[target] = true;
                vec![Message::new(initiator, target, MessageKind::Request)]
            }
            (false, true) => {
                self.informed[initiator] = true;
                vec![Message::new(target, initiator, MessageKind::Request)]
            }
            _ => Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::sim_rng;
    use crate::swarm::generate_swarm;

    struct Silent;

    impl Protocol for Silent {
        fn is_active(&self, _: usize) -> bool {
            false
        }
        fn on_contact(&mut self, _: usize, _: usize) -> Vec<Message> {
            unreachable!("inactive sensors never contact")
        }
    }

    fn path3() -> AdjacencyGraph {
        AdjacencyGraph::from_edges(3, &[(0, 1), (1, 2)])
    }

    #[test]
    fn empty_schedule_cases() {
        let g = path3();
        let mut rng = sim_rng(1);
        assert!(schedule_slot(&g, &[], ContactRule::Multiple, &mut rng).is_empty());
        let isolated = AdjacencyGraph::from_edges(1, &[]);
        for _ in 0..20 {
            assert!(schedule_slot(&isolated, &[0], ContactRule::Multiple, &mut rng).is_empty());
        }
    }

    #[test]
    fn schedule_is_deterministic() {
        let g = AdjacencyGraph::from_edges(2, &[(0, 1)]);
        let run = |seed| {
            let mut rng = sim_rng(seed);
            (0..50)
                .map(|_| schedule_slot(&g, &[0, 1], ContactRule::Multiple, &mut rng))
                .collect::<Vec<_>>()
        };
        assert_eq!(run(11), run(11));
    }

    #[test]
    fn disjoint_pairs_never_share_a_sensor() {
        let s = generate_swarm(80, 0.25, 50.0, 100.0, 4).unwrap();
        let active: Vec<usize> = (0..80).collect();
        let mut rng = sim_rng(2);
        for _ in 0..50 {
            let contacts = schedule_slot(&s, &active, ContactRule::DisjointPairs, &mut rng);
            let mut seen = [false; 80];
            for c in contacts {
                assert!(!seen[c.initiator] && !seen[c.target]);
                seen[c.initiator] = true;
                seen[c.target] = true;
            }
        }
    }

    #[test]
    fn inactive_protocol_uses_no_slots() {
        let g = path3();
        let trace = run_protocol(
            &g,
            &mut Silent,
            &GossipConfig::for_population(3),
            &mut sim_rng(0),
            None,
        )
        .unwrap();
        assert_eq!(trace.slots_used, 0);
        assert_eq!(trace.total_messages, 0);
    }

    #[test]
    fn epidemic_on_path_reaches_everyone() {
        // spreading from one end needs at least one slot per hop
        let g = path3();
        for seed in 0..200 {
            let mut proto = Epidemic::new(3, &[0]);
            let trace = run_protocol(
                &g,
                &mut proto,
                &GossipConfig::for_population(3),
                &mut sim_rng(seed),
                None,
            )
            .unwrap();
            assert_eq!(proto.informed_count(), 3);
            assert!(trace.slots_used >= 2);
            assert_eq!(trace.total_messages, 2);
            assert_eq!(
                trace.messages_per_sensor.iter().sum::<u64>(),
                trace.total_messages
            );
        }
    }

    #[test]
    fn epidemic_covers_connected_swarm() {
        let s = (0..)
            .map(|seed| generate_swarm(50, 0.3, 50.0, 100.0, seed).unwrap())
            .find(|s| s.is_connected())
            .unwrap();
        let cfg = GossipConfig::for_population(50);
        let mut proto = Epidemic::new(50, &[0]);
        let trace = run_protocol(&s, &mut proto, &cfg, &mut sim_rng(9), None).unwrap();
        assert_eq!(proto.informed_count(), 50);
        assert!(trace.slots_used < cfg.max_slots);
    }

    #[test]
    fn first_empty_contact_stops_early() {
        let g = AdjacencyGraph::from_edges(2, &[(0, 1)]);
        let cfg = GossipConfig::for_population(2).with_stop_rule(StopRule::FirstEmptyContact);
        let mut proto = Epidemic::new(2, &[0, 1]);
        let trace = run_protocol(&g, &mut proto, &cfg, &mut sim_rng(3), None).unwrap();
        assert_eq!(trace.total_messages, 0);
        assert!(trace.slots_used >= 1);
    }

    #[test]
    fn timeout_carries_partial_trace() {
        struct Chatter;
        impl Protocol for Chatter {
            fn is_active(&self, _: usize) -> bool {
                true
            }
            fn on_contact(&mut self, i: usize, j: usize) -> Vec<Message> {
                vec![Message::new(i, j, MessageKind::Theta)]
            }
        }
        let g = AdjacencyGraph::from_edges(2, &[(0, 1)]);
        let cfg = GossipConfig::for_population(2).with_max_slots(25);
        let err = run_protocol(&g, &mut Chatter, &cfg, &mut sim_rng(1), None).unwrap_err();
        assert_eq!(err.trace.slots_used, 25);
        assert!(err.trace.total_messages > 0);
        assert_eq!(
            err.trace.messages_per_sensor.iter().sum::<u64>(),
            err.trace.total_messages
        );
    }

    #[test]
    fn event_log_mirrors_trace() {
        let s = generate_swarm(40, 0.3, 50.0, 100.0, 5).unwrap();
        let mut log = Vec::new();
        let mut sink = |e: &GossipEvent| log.push(e.clone());
        let mut proto = Epidemic::new(40, &[3]);
        let trace = run_protocol(
            &s,
            &mut proto,
            &GossipConfig::for_population(40),
            &mut sim_rng(5),
            Some(&mut sink),
        )
        .unwrap();
        let logged: usize = log.iter().map(|e| e.kinds.len()).sum();
        assert_eq!(logged as u64, trace.total_messages);
        assert!(log.windows(2).all(|w| w[0].slot <= w[1].slot));
        let line = serde_json::to_string(&log[0]).unwrap();
        assert!(line.contains("\"initiator\""));
    }

    #[test]
    fn same_seed_same_trace() {
        let s = generate_swarm(60, 0.2, 50.0, 100.0, 6).unwrap();
        let run = || {
            let mut proto = Epidemic::new(60, &[0]);
            run_protocol(
                &s,
                &mut proto,
                &GossipConfig::for_population(60),
                &mut sim_rng(77),
                None,
            )
        };
        assert_eq!(run(), run());
    }
}
