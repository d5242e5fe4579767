//! Estimator invariants over random instances.

use nalgebra::DVector;
use proptest::prelude::*;

use vsnsim::rade::{admm_run, rade_run, Coupling, EstimatorConfig, EstimatorState, ToleranceSpec};
use vsnsim::radv::Topology;
use vsnsim::sensing::{centralized_ls, generate_estimation_task};

fn coupling(topology: Topology, v: usize) -> Coupling {
    Coupling::from_links(v, &topology.links(v)).unwrap()
}

fn topology() -> impl Strategy<Value = Topology> {
    prop::sample::select(vec![Topology::Complete, Topology::Cycle, Topology::Star])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Both estimators agree with least squares on noiseless data.
    #[test]
    fn noiseless_consensus_is_least_squares(seed in 0u64..1000, v in 2usize..7, topo in topology()) {
        let task = generate_estimation_task(3, 2, v, 0.0, seed).unwrap();
        let ls = centralized_ls(&task).unwrap();
        let config = EstimatorConfig {
            tolerance: ToleranceSpec::new(1e-7, 1e-7).unwrap(),
            rho: 0.5,
            ..EstimatorConfig::default()
        };
        let c = coupling(topo, v);
        for out in [admm_run(&c, &task, &config).unwrap(), rade_run(&c, &task, &config, seed, None).unwrap()] {
            prop_assert!(out.converged);
            for e in &out.estimates {
                prop_assert!((e - &ls).norm() <= 1e-3 * (1.0 + ls.norm()));
            }
        }
    }

    /// A θ step never increases the augmented Lagrangian, nor does a z step.
    #[test]
    fn block_steps_descend(seed in 0u64..1000, v in 2usize..6, topo in topology(), rho in 0.05f64..5.0) {
        let task = generate_estimation_task(3, 2, v, 0.1, seed).unwrap();
        let c = coupling(topo, v);
        let mut state = EstimatorState::new(&c, 3, rho);
        for i in 0..v {
            state.z[i] = DVector::from_fn(3, |k, _| ((seed as usize + i * 3 + k) % 7) as f64 / 7.0 - 0.5);
        }
        let config = EstimatorConfig { rho, ..EstimatorConfig::default() };
        for i in 0..v {
            let before = state.augmented_lagrangian(&task.models);
            state.theta[i] = state.theta_step(i, &task.models[i]).unwrap();
            let mid = state.augmented_lagrangian(&task.models);
            state.z[i] = state.z_step(i, &config);
            let after = state.augmented_lagrangian(&task.models);
            prop_assert!(mid <= before + 1e-9 * (1.0 + before.abs()));
            prop_assert!(after <= mid + 1e-9 * (1.0 + mid.abs()));
        }
    }

    /// A RADE contact moves at most one estimate each way.
    #[test]
    fn rade_message_accounting(seed in 0u64..1000, v in 2usize..8, topo in topology()) {
        let task = generate_estimation_task(4, 3, v, 0.05, seed).unwrap();
        let mut contacts = 0u64;
        let mut sink = |_: &vsnsim::gossip::GossipEvent| contacts += 1;
        let out = rade_run(&coupling(topo, v), &task, &EstimatorConfig::default(), seed, Some(&mut sink)).unwrap();
        prop_assert!(out.messages <= 2 * contacts);
        prop_assert!(contacts <= out.iterations * v as u64);
    }
}
