//! Binary particle swarm solver for the placement problem.
//!
//! Velocities update classically; a position bit flips to 1 with
//! probability sigmoid(velocity) (the usual discrete adaptation).
//! Constraint handling is an additive penalty per violated constraint,
//! so infeasible particles stay comparable without a repair step. Runs
//! are fully deterministic for a fixed seed: random draws happen in a
//! fixed sequential order and only the pure fitness evaluations fan out
//! across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{evaluate, OffloadDecision};
use super::{Instance, ModelError, SolveError, SolveResult};
use crate::exec;

pub const DEFAULT_PENALTY_COEFFICIENT: f64 = 1e6;

/// Swarm hyperparameters. Defaults are tuned so the solver reliably
/// reaches the exhaustive optimum on 10-device instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PsoConfig {
    pub swarm_size: usize,
    pub max_iterations: usize,
    /// Inertia weight on the previous velocity.
    pub inertia: f64,
    /// Pull toward the particle's own best position.
    pub cognitive: f64,
    /// Pull toward the swarm-wide best position.
    pub social: f64,
    /// Velocities are clamped to [-v, +v].
    pub velocity_clamp: f64,
    /// Additive cost per violated constraint; large enough that any
    /// feasible candidate beats any infeasible one.
    pub penalty_coefficient: f64,
    pub rng_seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        Self {
            swarm_size: 30,
            max_iterations: 100,
            inertia: 0.7,
            cognitive: 1.5,
            social: 1.5,
            velocity_clamp: 4.0,
            penalty_coefficient: DEFAULT_PENALTY_COEFFICIENT,
            rng_seed: 0,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.swarm_size < 2 {
            return Err(ModelError::InvalidParameter(format!(
                "swarm_size must be at least 2, got {}",
                self.swarm_size
            )));
        }
        if self.max_iterations < 1 {
            return Err(ModelError::InvalidParameter(
                "max_iterations must be at least 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.inertia) {
            return Err(ModelError::InvalidParameter(format!(
                "inertia must lie in [0, 1], got {}",
                self.inertia
            )));
        }
        if self.cognitive < 0.0 || self.social < 0.0 {
            return Err(ModelError::InvalidParameter(
                "cognitive and social factors must be non-negative".into(),
            ));
        }
        if !(self.velocity_clamp > 0.0) {
            return Err(ModelError::InvalidParameter(
                "velocity_clamp must be positive".into(),
            ));
        }
        if !(self.penalty_coefficient > 0.0) {
            return Err(ModelError::InvalidParameter(
                "penalty_coefficient must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Seed replaced; handy for batch runs.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }
}

/// Objective plus penalty: feasible candidates score their raw cost,
/// infeasible ones add `coefficient` per violated constraint.
pub fn penalized_cost(decision: &OffloadDecision, coefficient: f64) -> f64 {
    decision.total_cost + coefficient * decision.violations.len() as f64
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Solve one instance with the swarm.
///
/// Returns `NoFeasibleSolution` (with the best infeasible candidate
/// attached) when the swarm never finds a feasible assignment.
pub fn solve_pso(instance: &Instance, cfg: &PsoConfig) -> Result<SolveResult, SolveError> {
    cfg.validate()?;
    let n = instance.len();
    if n == 0 {
        return Ok(SolveResult {
            decision: OffloadDecision::empty(),
            penalized_cost: 0.0,
            iterations_used: 0,
            oracle_optimal: false,
        });
    }
    // Fail fast on mismatched inputs.
    evaluate(
        &instance.tasks,
        &instance.devices,
        &instance.edge,
        &instance.weights,
        &vec![false; n],
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let swarm = cfg.swarm_size;

    // Particle 0 starts all-local and particle 1 all-offload, so the
    // swarm's best can never lose to the trivial assignments.
    let mut positions: Vec<Vec<bool>> = (0..swarm)
        .map(|p| match p {
            0 => vec![false; n],
            1 => vec![true; n],
            _ => (0..n).map(|_| rng.gen_bool(0.5)).collect(),
        })
        .collect();
    let mut velocities: Vec<Vec<f64>> = (0..swarm)
        .map(|_| {
            (0..n)
                .map(|_| rng.gen_range(-cfg.velocity_clamp..=cfg.velocity_clamp))
                .collect()
        })
        .collect();

    let score = |assignments: &Vec<bool>| -> f64 {
        let decision = evaluate(
            &instance.tasks,
            &instance.devices,
            &instance.edge,
            &instance.weights,
            assignments,
        )
        .expect("lengths validated");
        penalized_cost(&decision, cfg.penalty_coefficient)
    };

    let mut personal_best = positions.clone();
    let mut personal_cost = exec::ordered_map(&positions, score);

    // Lowest-index particle wins cost ties.
    let mut best_idx = 0;
    for (i, c) in personal_cost.iter().enumerate() {
        if *c < personal_cost[best_idx] {
            best_idx = i;
        }
    }
    let mut global_best = personal_best[best_idx].clone();
    let mut global_cost = personal_cost[best_idx];

    let mut iterations_used = 0;
    for _ in 0..cfg.max_iterations {
        iterations_used += 1;
        // Draws happen particle-major, bit-minor, before any evaluation,
        // so the random sequence is independent of thread scheduling.
        for p in 0..swarm {
            for d in 0..n {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                let x = positions[p][d] as u8 as f64;
                let pb = personal_best[p][d] as u8 as f64;
                let gb = global_best[d] as u8 as f64;
                let mut v = cfg.inertia * velocities[p][d]
                    + cfg.cognitive * r1 * (pb - x)
                    + cfg.social * r2 * (gb - x);
                v = v.clamp(-cfg.velocity_clamp, cfg.velocity_clamp);
                velocities[p][d] = v;
                let flip: f64 = rng.gen();
                positions[p][d] = flip < sigmoid(v);
            }
        }

        let costs = exec::ordered_map(&positions, score);
        for p in 0..swarm {
            if costs[p] < personal_cost[p] {
                personal_cost[p] = costs[p];
                personal_best[p] = positions[p].clone();
            }
        }
        for p in 0..swarm {
            if personal_cost[p] < global_cost {
                global_cost = personal_cost[p];
                global_best = personal_best[p].clone();
            }
        }
    }

    let decision = evaluate(
        &instance.tasks,
        &instance.devices,
        &instance.edge,
        &instance.weights,
        &global_best,
    )?;
    let result = SolveResult {
        penalized_cost: global_cost,
        iterations_used,
        oracle_optimal: false,
        decision,
    };
    if result.decision.feasible {
        Ok(result)
    } else {
        Err(SolveError::NoFeasibleSolution {
            best: Box::new(result),
        })
    }
}

/// Solve many independent instances, in parallel when enabled.
///
/// Instance `i` runs with `cfg.rng_seed + i`, so results do not depend
/// on execution order.
pub fn solve_pso_many(
    instances: &[Instance],
    cfg: &PsoConfig,
) -> Vec<Result<SolveResult, SolveError>> {
    let indexed: Vec<(usize, &Instance)> = instances.iter().enumerate().collect();
    exec::ordered_map(&indexed, |(i, instance)| {
        solve_pso(instance, &cfg.clone().with_seed(cfg.rng_seed + *i as u64))
    })
}

#[cfg(test)]
mod tests {
    use super::super::model::{CostWeights, DeviceProfile, EdgeProfile, TaskSpec};
    use super::super::synth::random_instance;
    use super::super::{solve_exhaustive, verify_against_exhaustive};
    use super::*;

    fn single_device(edge_dominates: bool) -> Instance {
        let task = TaskSpec {
            data_size_bits: 1e6,
            local_cycles_per_bit: 1000.0,
            enc_cycles_per_bit: 50.0,
            edge_cycles_per_bit: 500.0,
            max_latency_s: 10.0,
        };
        let dev = DeviceProfile {
            local_cpu_hz: 1e9,
            tx_rate_bps: 2e7,
            min_rate_bps: task.data_size_bits / task.max_latency_s,
            tx_power_w: 0.02,
            max_tx_power_w: 0.02,
            local_energy_j: if edge_dominates { 2.0 } else { 0.001 },
            enc_energy_j: 0.01,
            local_mem_mb: if edge_dominates { 80.0 } else { 20.0 },
            offload_mem_mb: 40.0,
            mem_cap_mb: 512.0,
        };
        Instance {
            tasks: vec![task],
            devices: vec![dev],
            edge: EdgeProfile::new(5e9),
            weights: CostWeights::equal(),
        }
    }

    #[test]
    fn dominating_edge_gets_offloaded() {
        let inst = single_device(true);
        let r = solve_pso(&inst, &PsoConfig::default()).unwrap();
        assert_eq!(r.decision.assignments, vec![true]);
        assert!(r.decision.feasible);
    }

    #[test]
    fn deadline_forces_local_execution() {
        let mut inst = single_device(true);
        // Throttle the uplink so offloading blows the deadline while
        // local execution stays inside it.
        inst.devices[0].tx_rate_bps = 5e4; // 20 s transfer
        let r = solve_pso(&inst, &PsoConfig::default()).unwrap();
        assert_eq!(r.decision.assignments, vec![false]);
        assert!(r.decision.feasible);
    }

    #[test]
    fn matches_exhaustive_on_seeded_instance() {
        let inst = random_instance(42, 10);
        let mut r = solve_pso(&inst, &PsoConfig::default()).unwrap();
        assert!(verify_against_exhaustive(&mut r, &inst).unwrap());
        assert!(r.oracle_optimal);
    }

    #[test]
    fn never_beats_the_oracle() {
        for seed in 0..20 {
            let inst = random_instance(seed, 8);
            let oracle = solve_exhaustive(&inst).unwrap();
            match solve_pso(&inst, &PsoConfig::default()) {
                Ok(r) => assert!(r.penalized_cost >= oracle.penalized_cost),
                Err(SolveError::NoFeasibleSolution { best }) => {
                    assert!(best.penalized_cost >= oracle.penalized_cost)
                }
                Err(e) => panic!("unexpected error: {e}"),
            }
        }
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let inst = random_instance(7, 12);
        let cfg = PsoConfig::default().with_seed(99);
        let a = solve_pso(&inst, &cfg).unwrap();
        let b = solve_pso(&inst, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.penalized_cost.to_bits(), b.penalized_cost.to_bits());
    }

    #[test]
    fn no_feasible_solution_attaches_best_candidate() {
        let mut inst = single_device(true);
        // Impossible deadline: both local and offload exceed it.
        inst.tasks[0].max_latency_s = 1e-6;
        inst.devices[0].min_rate_bps =
            inst.tasks[0].data_size_bits / inst.tasks[0].max_latency_s;
        match solve_pso(&inst, &PsoConfig::default()) {
            Err(SolveError::NoFeasibleSolution { best }) => {
                assert!(!best.decision.feasible);
                assert!(best.penalized_cost >= DEFAULT_PENALTY_COEFFICIENT);
            }
            other => panic!("expected NoFeasibleSolution, got {other:?}"),
        }
    }

    #[test]
    fn weight_scaling_by_powers_of_two_preserves_argmin() {
        for seed in 0..10 {
            let inst = random_instance(seed, 8);
            let base = solve_exhaustive(&inst).unwrap();
            for scale in [0.5, 2.0, 4.0] {
                let mut scaled = inst.clone();
                scaled.weights.time *= scale;
                scaled.weights.energy *= scale;
                scaled.weights.memory *= scale;
                let r = solve_exhaustive(&scaled).unwrap();
                assert_eq!(r.decision.assignments, base.decision.assignments);
            }
        }
    }

    #[test]
    fn batch_runs_match_individual_runs() {
        let instances: Vec<Instance> = (0..6).map(|s| random_instance(s, 6)).collect();
        let cfg = PsoConfig::default().with_seed(5);
        let batch = solve_pso_many(&instances, &cfg);
        for (i, (inst, got)) in instances.iter().zip(&batch).enumerate() {
            let solo = solve_pso(inst, &cfg.clone().with_seed(5 + i as u64));
            match (got, solo) {
                (Ok(a), Ok(b)) => assert_eq!(*a, b),
                (Err(SolveError::NoFeasibleSolution { best: a }), Err(SolveError::NoFeasibleSolution { best: b })) => {
                    assert_eq!(a.penalized_cost, b.penalized_cost)
                }
                other => panic!("mismatched outcomes: {other:?}"),
            }
        }
    }
}
