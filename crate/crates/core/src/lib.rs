//! Simulation of cloud-assisted sensor network virtualization and
//! distributed consensus estimation.
//!
//! A swarm of participatory sensors is modelled as a random geometric graph.
//! A virtual sensing request is embedded into the swarm by a four-phase gossip
//! protocol ([`radv`]): search, domain pruning, benefit matrix construction and
//! local assignment. The selected sensors then estimate an unknown parameter
//! vector either with synchronous consensus ADMM or with its asynchronous
//! randomized gossip variant ([`rade`]). The [`harness`] module ties the pieces
//! together into reproducible experiments.

// `!(x > 0.0)` is how the validators reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gossip;
pub mod harness;
pub mod matching;
pub mod rade;
pub mod radv;
pub mod rng;
pub mod sensing;
pub mod swarm;

pub use error::{Error, Result};
