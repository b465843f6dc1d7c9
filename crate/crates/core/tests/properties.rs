//! Invariants over randomly generated networks.

use proptest::prelude::*;
use serde_json::json;
use tnet::fluid::fluid_solve;
use tnet::model::{validate_spec, NetworkSpec};
use tnet::simulator::simulate;
use tnet::stochastic::RngStream;

fn base(kind: u8) -> serde_json::Value {
    match kind {
        0 => json!({ "kind": "exponential" }),
        1 => json!({ "kind": "deterministic" }),
        _ => json!({ "kind": "gamma_scv", "scv": 0.5 }),
    }
}

/// Three nodes, node 1 the only entry, routing rows scaled to sum below 0.8.
fn network(weights: &[f64], rates: &[f64], bases: &[u8], t1: f64) -> NetworkSpec {
    let rows: Vec<Vec<f64>> = weights
        .chunks(3)
        .map(|w| {
            let s: f64 = w.iter().sum::<f64>().max(1e-12);
            w.iter().map(|v| 0.8 * v / s.max(1.0)).collect()
        })
        .collect();
    let services: Vec<_> = rates
        .iter()
        .zip(bases)
        .map(|(&r, &b)| json!({ "rate": { "kind": "constant", "rate": r }, "base": base(b) }))
        .collect();
    let text = json!({
        "K": 3,
        "P": rows,
        "entry_nodes": [1],
        "arrivals": [{ "kind": "uniform", "a": 0.0, "b": 1.0 }],
        "correlation": { "kind": "independent" },
        "services": services,
        "horizon": { "t0": 0.0, "t1": t1, "h": 0.01 }
    })
    .to_string();
    NetworkSpec::from_json_str(&text).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simulation_conserves_flow_jobs_and_work(
        weights in proptest::collection::vec(0.0..1.0_f64, 9),
        rates in proptest::collection::vec(0.5..4.0_f64, 3),
        bases in proptest::collection::vec(0u8..3, 3),
        n in 1usize..400,
        seed in any::<u64>(),
    ) {
        let spec = network(&weights, &rates, &bases, 3.0);
        prop_assume!(validate_spec(&spec).is_valid());
        let traj = simulate(&spec, n, &RngStream::new(seed)).unwrap();
        prop_assert!(traj.check_all().is_ok(), "{:?}", traj.check_all());
        // Queues are non-negative integers.
        for k in 0..3 {
            for &q in traj.queue.coord(k) {
                prop_assert!(q >= 0.0 && q.fract() == 0.0);
            }
        }
    }

    #[test]
    fn simulation_is_deterministic_per_seed(
        weights in proptest::collection::vec(0.0..1.0_f64, 9),
        seed in any::<u64>(),
    ) {
        let spec = network(&weights, &[2.0, 1.5, 1.0], &[0, 2, 0], 3.0);
        prop_assume!(validate_spec(&spec).is_valid());
        let a = simulate(&spec, 200, &RngStream::new(seed)).unwrap();
        let b = simulate(&spec, 200, &RngStream::new(seed)).unwrap();
        prop_assert_eq!(a.queue, b.queue);
        prop_assert_eq!(a.departures, b.departures);
    }

    #[test]
    fn fluid_queue_conserves_mass(
        weights in proptest::collection::vec(0.0..1.0_f64, 9),
        rates in proptest::collection::vec(0.5..4.0_f64, 3),
    ) {
        let spec = network(&weights, &rates, &[0, 0, 0], 4.0);
        prop_assume!(validate_spec(&spec).is_valid());
        let fluid = fluid_solve(&spec).unwrap();
        let q = fluid.queue();
        let dep = fluid.departures(&spec);
        let grid = *fluid.grid();
        for i in 0..grid.len() {
            // Arrivals to node 1 plus routed departures equal its queue plus departures.
            let arrived = grid.time(i).clamp(0.0, 1.0);
            for k in 0..3 {
                let routed_in: f64 = (0..3).map(|l| spec.p(l, k) * dep.at(l, i)).sum();
                let inflow = if k == 0 { arrived } else { 0.0 } + routed_in;
                prop_assert!((inflow - q.at(k, i) - dep.at(k, i)).abs() < 1e-8,
                    "node {} at {}: in {} q {} d {}", k + 1, grid.time(i), inflow, q.at(k, i), dep.at(k, i));
                prop_assert!(q.at(k, i) >= -1e-9);
            }
        }
    }
}
