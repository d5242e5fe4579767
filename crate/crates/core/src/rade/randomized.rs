//! Randomized asynchronous estimation over the gossip engine.
//!
//! Every virtual link `e = {i, j}` carries its own auxiliary variable `z_e`
//! and the multipliers `λ_{i,e}`, `λ_{j,e}` of the constraints `θ_i = z_e`,
//! `θ_j = z_e`. A contact over `e` exchanges `θ_i` and `θ_j`; both endpoints
//! then run the same `z_e` and multiplier updates from the exchanged values,
//! so their copies never diverge and no auxiliary variable has to travel.
//! Each endpoint finally re-solves its `θ` from its incident links. A sensor
//! whose primal test passes stops transmitting `θ`; both ends then keep using
//! the value it last sent.
//!
//! The per-sensor stopping tests use `z_i`, the mean of `z_e` over the links
//! of `i`, and the multipliers `λ_{i,e}` it holds.

use nalgebra::DVector;
use rand::SeedableRng;

use super::updates::{
    lambda_update, stopping_check, theta_update, z_update, IncomingTerm, OutgoingTerm,
};
use super::{Coupling, EstimateOutcome, EstimatorConfig};
use crate::error::{Error, Result};
use crate::gossip::{
    run_protocol, trace_of, EventSink, GossipConfig, Message, MessageKind, Protocol, StopRule,
};
use crate::rng::SimRng;
use crate::sensing::{solve_spd, EstimationTask};

struct Link {
    ends: [usize; 2],
    z: DVector<f64>,
    /// `λ` of the constraint on `θ_{ends[k]}`.
    lambda: [DVector<f64>; 2],
    /// Last `θ` each end transmitted over this link.
    sent: [DVector<f64>; 2],
}

struct Rade<'a> {
    task: &'a EstimationTask,
    config: &'a EstimatorConfig,
    links: Vec<Link>,
    /// `incident[i]`: `(link, side)` pairs of sensor `i`.
    incident: Vec<Vec<(usize, usize)>>,
    theta: Vec<DVector<f64>>,
    z: Vec<DVector<f64>>,
    z_prev: Vec<DVector<f64>>,
    primal_ok: Vec<bool>,
    dual_ok: Vec<bool>,
    messages: Vec<u64>,
    failure: Option<Error>,
}

impl<'a> Rade<'a> {
    fn new(
        coupling: &Coupling,
        task: &'a EstimationTask,
        config: &'a EstimatorConfig,
    ) -> Result<Self> {
        let (v, n) = (coupling.len(), task.params());
        let zero = DVector::zeros(n);
        let mut links = Vec::new();
        let mut incident = vec![Vec::new(); v];
        for a in 0..v {
            for &b in coupling.neighbors(a).iter().filter(|&&b| b > a) {
                incident[a].push((links.len(), 0));
                incident[b].push((links.len(), 1));
                links.push(Link {
                    ends: [a, b],
                    z: zero.clone(),
                    lambda: [zero.clone(), zero.clone()],
                    sent: [zero.clone(), zero.clone()],
                });
            }
        }
        let mut rade = Rade {
            task,
            config,
            links,
            incident,
            theta: vec![zero.clone(); v],
            z: vec![zero.clone(); v],
            z_prev: vec![zero; v],
            primal_ok: vec![false; v],
            dual_ok: vec![false; v],
            messages: vec![0; v],
            failure: None,
        };
        for i in 0..v {
            if rade.incident[i].is_empty() {
                let m = &task.models[i];
                rade.theta[i] = solve_spd(m.h.transpose() * &m.h, &(m.h.transpose() * &m.y))?;
                rade.z[i] = rade.theta[i].clone();
                rade.z_prev[i] = rade.theta[i].clone();
                rade.primal_ok[i] = true;
                rade.dual_ok[i] = true;
            } else {
                // the θ a sensor holds between contacts is the one its last
                // update produced; before any contact that is the step from zero
                rade.theta[i] = rade.theta_step(i)?;
            }
        }
        Ok(rade)
    }

    fn link_between(&self, i: usize, j: usize) -> (usize, usize) {
        *self.incident[i]
            .iter()
            .find(|(l, side)| self.links[*l].ends[1 - side] == j)
            .expect("contacts follow coupled links")
    }

    fn theta_step(&self, i: usize) -> Result<DVector<f64>> {
        let terms: Vec<OutgoingTerm<'_>> = self.incident[i]
            .iter()
            .map(|&(l, side)| OutgoingTerm {
                lambda: &self.links[l].lambda[side],
                rho: self.config.rho,
                z: &self.links[l].z,
            })
            .collect();
        theta_update(&self.task.models[i], &terms)
    }

    fn refresh_node(&mut self, i: usize) {
        let count = self.incident[i].len() as f64;
        let mut mean = DVector::zeros(self.task.params());
        for &(l, _) in &self.incident[i] {
            mean += &self.links[l].z;
        }
        self.z_prev[i] = std::mem::replace(&mut self.z[i], mean / count);
        let rho = self.config.rho;
        let held: Vec<(f64, &DVector<f64>)> = self.incident[i]
            .iter()
            .map(|&(l, side)| (rho, &self.links[l].lambda[side]))
            .collect();
        let status = stopping_check(
            &self.theta[i],
            &self.z[i],
            &self.z_prev[i],
            &held,
            &self.config.tolerance,
            self.theta.len(),
        );
        self.primal_ok[i] = status.primal_ok;
        self.dual_ok[i] = status.dual_ok;
    }
}

impl Protocol for Rade<'_> {
    fn is_active(&self, sensor: usize) -> bool {
        self.failure.is_none() && !(self.primal_ok[sensor] && self.dual_ok[sensor])
    }

    fn on_contact(&mut self, initiator: usize, target: usize) -> Vec<Message> {
        if self.failure.is_some() {
            return Vec::new();
        }
        let (l, side) = self.link_between(initiator, target);
        let mut sent = Vec::new();
        for (who, s, to) in [(initiator, side, target), (target, 1 - side, initiator)] {
            if !self.primal_ok[who] {
                self.links[l].sent[s] = self.theta[who].clone();
                sent.push(Message::new(who, to, MessageKind::Theta));
                self.messages[who] += 1;
            }
        }
        let rho = self.config.rho;
        let link = &mut self.links[l];
        let z = z_update(
            &[
                IncomingTerm {
                    theta: &link.sent[0],
                    lambda: &link.lambda[0],
                    rho,
                },
                IncomingTerm {
                    theta: &link.sent[1],
                    lambda: &link.lambda[1],
                    rho,
                },
            ],
            self.config.z_normalization,
            2,
        );
        link.z = z;
        for s in 0..2 {
            link.lambda[s] = lambda_update(&link.lambda[s], rho, &link.sent[s], &link.z);
        }
        for i in [initiator, target] {
            match self.theta_step(i) {
                Ok(theta) => self.theta[i] = theta,
                Err(e) => {
                    self.failure = Some(e);
                    return sent;
                }
            }
            self.refresh_node(i);
        }
        sent
    }
}

/// Randomized asynchronous estimation over the coupling graph. Runs until
/// every sensor passes both stopping tests or `config.max_slots` elapse;
/// `iterations` of the outcome counts slots.
pub fn rade_run(
    coupling: &Coupling,
    task: &EstimationTask,
    config: &EstimatorConfig,
    seed: u64,
    events: Option<EventSink<'_>>,
) -> Result<EstimateOutcome> {
    config.validate()?;
    if task.models.len() != coupling.len() {
        return Err(Error::invalid(format!(
            "task has {} sensors but the coupling has {}",
            task.models.len(),
            coupling.len()
        )));
    }
    let mut proto = Rade::new(coupling, task, config)?;
    let gossip = GossipConfig {
        max_slots: config.max_slots,
        stop_rule: StopRule::Never,
        contact_rule: config.contact_rule,
    };
    let mut rng = SimRng::seed_from_u64(seed);
    let (trace, timed_out) = trace_of(run_protocol(
        coupling.graph(),
        &mut proto,
        &gossip,
        &mut rng,
        events,
    ));
    if let Some(e) = proto.failure {
        return Err(e);
    }
    let converged = !timed_out
        && proto
            .primal_ok
            .iter()
            .zip(&proto.dual_ok)
            .all(|(p, d)| *p && *d);
    Ok(EstimateOutcome {
        estimates: proto.theta,
        iterations: trace.slots_used,
        messages: proto.messages.iter().sum(),
        converged,
    })
}
