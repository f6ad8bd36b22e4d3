//! Cross-module integration checks that don't belong to any single
//! unit: workload edge cases, latency scaling, and solver feasibility
//! preservation at full strength.

use edgecare_core::config::ScenarioConfig;
use edgecare_core::exec;
use edgecare_core::offload::{solve_exhaustive, solve_pso, synth, PsoConfig, SolveError};
use edgecare_core::sim::{run_scenario, Case};

#[test]
fn zero_request_workload_still_stores_records() {
    let mut cfg = ScenarioConfig::default();
    cfg.workload.requests = 0;
    cfg.workload.record_size_bytes = (10_000, 10_000);
    let result = run_scenario(&cfg, 3).unwrap();
    assert!(result.outcomes.is_empty());
    assert!(result.records_stored > 0);
    assert!(!result.offload.is_empty());
    assert!(!result.global_dump.is_empty());
}

#[test]
fn doubling_payload_size_increases_every_request_latency() {
    let mut small = ScenarioConfig::default();
    small.workload.record_size_bytes = (100_000, 100_000);
    small.workload.requests = 6;
    let mut large = small.clone();
    large.workload.record_size_bytes = (200_000, 200_000);

    let a = run_scenario(&small, 9).unwrap();
    let b = run_scenario(&large, 9).unwrap();
    assert_eq!(a.outcomes.len(), b.outcomes.len());
    for (sa, sb) in a.outcomes.iter().zip(&b.outcomes) {
        assert_eq!(sa.request_id, sb.request_id);
        assert!(
            sb.latency > sa.latency,
            "request {}: latency did not grow with payload",
            sa.request_id
        );
    }
}

#[test]
fn remote_fraction_controls_the_case_mix() {
    let mut cfg = ScenarioConfig::default();
    cfg.workload.record_size_bytes = (10_000, 10_000);
    cfg.workload.requests = 8;
    cfg.workload.remote_fraction = 0.5;
    let result = run_scenario(&cfg, 4).unwrap();
    let remote = result
        .outcomes
        .iter()
        .filter(|o| o.case == Case::Remote)
        .count();
    assert_eq!(remote, 4);

    cfg.workload.remote_fraction = 0.0;
    let result = run_scenario(&cfg, 4).unwrap();
    assert!(result.outcomes.iter().all(|o| o.case == Case::Local));
}

#[test]
fn swarm_at_full_strength_finds_feasible_when_one_exists() {
    // Adversarial instances include infeasible assignments and whole
    // infeasible instances; whenever the oracle proves a feasible
    // optimum exists, the default-strength swarm must end feasible too.
    let params = synth::SynthParams::adversarial();
    let seeds: Vec<u64> = (0..200).collect();
    let misses: usize = exec::ordered_map(&seeds, |seed| {
        let inst = synth::random_instance_with(*seed, 8, &params);
        let oracle = solve_exhaustive(&inst).expect("oracle");
        match solve_pso(&inst, &PsoConfig::default().with_seed(*seed)) {
            Ok(result) => {
                assert!(result.decision.feasible);
                0
            }
            Err(SolveError::NoFeasibleSolution { .. }) => usize::from(oracle.decision.feasible),
            Err(e) => panic!("unexpected error: {e}"),
        }
    })
    .into_iter()
    .sum();
    assert_eq!(
        misses, 0,
        "swarm missed a feasible solution the oracle found in {misses} instances"
    );
}
