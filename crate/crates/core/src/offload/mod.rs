//! Task placement between devices and their edge server: cost model,
//! solvers, and seeded instance synthesis.

pub mod exhaustive;
pub mod model;
pub mod pso;
pub mod synth;

pub use exhaustive::{solve_exhaustive, solve_exhaustive_seq, EXHAUSTIVE_MAX_DEVICES};
pub use model::{
    evaluate, local_time, offload_energy, offload_time, tx_energy, AllocationPolicy, Constraint,
    CostWeights, DeviceCost, DeviceProfile, EdgeProfile, ModelError, OffloadDecision, TaskSpec,
    Violation,
};
pub use pso::{solve_pso, solve_pso_many, PsoConfig};

use thiserror::Error;

/// Outcome of a solver run over one problem instance.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    /// Best decision found, with per-device costs and feasibility.
    pub decision: OffloadDecision,
    /// Objective value plus constraint penalties for infeasible candidates.
    pub penalized_cost: f64,
    /// Iterations actually executed (1 for the exhaustive scan).
    pub iterations_used: usize,
    /// True only when the result has been re-checked against the
    /// exhaustive optimum (set by the exhaustive solver itself, or by
    /// [`verify_against_exhaustive`]).
    pub oracle_optimal: bool,
}

#[derive(Debug, Error)]
pub enum SolveError {
    /// Every candidate the solver saw violates some constraint. The best
    /// infeasible candidate is attached for inspection.
    #[error("no feasible assignment found (best penalized cost {})", best.penalized_cost)]
    NoFeasibleSolution { best: Box<SolveResult> },
    /// Exhaustive enumeration refused: 2^n candidates is too many.
    #[error("instance too large for exhaustive search: {n} devices (max {max})")]
    TooLarge { n: usize, max: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Problem instance handed to the solvers.
#[derive(Debug, Clone)]
pub struct Instance {
    pub tasks: Vec<TaskSpec>,
    pub devices: Vec<DeviceProfile>,
    pub edge: EdgeProfile,
    pub weights: CostWeights,
}

impl Instance {
    pub fn len(&self) -> usize {
        self.devices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.devices.is_empty()
    }
}

/// Re-check `result` against the exhaustive optimum and set its
/// `oracle_optimal` flag accordingly. Only valid for small instances.
pub fn verify_against_exhaustive(
    result: &mut SolveResult,
    instance: &Instance,
) -> Result<bool, SolveError> {
    let oracle = solve_exhaustive(instance)?;
    let optimal = result.penalized_cost == oracle.penalized_cost;
    result.oracle_optimal = optimal;
    Ok(optimal)
}
