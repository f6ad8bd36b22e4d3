//! Exhaustive enumeration of all 2^n assignment vectors.
//!
//! This is the ground-truth oracle for the swarm solver: it scans every
//! candidate, scores it with the same penalty rule, and breaks ties by
//! the lexicographically smallest assignment vector. Guarded to small
//! instances.

use super::model::evaluate;
use super::pso::{penalized_cost, DEFAULT_PENALTY_COEFFICIENT};
use super::{Instance, SolveError, SolveResult};
use crate::exec;

/// Refuse to enumerate more than 2^20 candidates.
pub const EXHAUSTIVE_MAX_DEVICES: usize = 20;

/// Candidate score used for the scan: penalized cost plus the mask for
/// lexicographic tie-breaking.
#[derive(Debug, Clone, Copy)]
struct Scored {
    mask: u32,
    cost: f64,
}

/// Bit i of `mask` is device i's assignment.
fn mask_to_assignments(mask: u32, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask >> i & 1 == 1).collect()
}

/// Lexicographic order on assignment vectors, device 0 first.
fn lex_less(a: u32, b: u32, n: usize) -> bool {
    for i in 0..n {
        let (xa, xb) = (a >> i & 1, b >> i & 1);
        if xa != xb {
            return xa < xb;
        }
    }
    false
}

/// Global optimum by enumeration; parallel scan when enabled.
pub fn solve_exhaustive(instance: &Instance) -> Result<SolveResult, SolveError> {
    solve_exhaustive_impl(instance, true)
}

/// Sequential twin of [`solve_exhaustive`]; identical results.
pub fn solve_exhaustive_seq(instance: &Instance) -> Result<SolveResult, SolveError> {
    solve_exhaustive_impl(instance, false)
}

fn solve_exhaustive_impl(instance: &Instance, parallel: bool) -> Result<SolveResult, SolveError> {
    let n = instance.len();
    if n > EXHAUSTIVE_MAX_DEVICES {
        return Err(SolveError::TooLarge {
            n,
            max: EXHAUSTIVE_MAX_DEVICES,
        });
    }
    if n == 0 {
        return Ok(SolveResult {
            decision: super::model::OffloadDecision::empty(),
            penalized_cost: 0.0,
            iterations_used: 1,
            oracle_optimal: true,
        });
    }
    // Validate lengths once up front so per-candidate evaluation cannot fail.
    evaluate(
        &instance.tasks,
        &instance.devices,
        &instance.edge,
        &instance.weights,
        &vec![false; n],
    )?;

    let candidates = 1usize << n;
    let score_one = |mask: usize| {
        let assignments = mask_to_assignments(mask as u32, n);
        let decision = evaluate(
            &instance.tasks,
            &instance.devices,
            &instance.edge,
            &instance.weights,
            &assignments,
        )
        .expect("lengths validated");
        Scored {
            mask: mask as u32,
            cost: penalized_cost(&decision, DEFAULT_PENALTY_COEFFICIENT),
        }
    };
    let scored = if parallel {
        exec::ordered_map_range(candidates, score_one)
    } else {
        exec::ordered_map_range_seq(candidates, score_one)
    };

    // Sequential reduction keeps the tie-break rule exact.
    let mut best = scored[0];
    for s in &scored[1..] {
        if s.cost < best.cost || (s.cost == best.cost && lex_less(s.mask, best.mask, n)) {
            best = *s;
        }
    }

    let decision = evaluate(
        &instance.tasks,
        &instance.devices,
        &instance.edge,
        &instance.weights,
        &mask_to_assignments(best.mask, n),
    )?;
    Ok(SolveResult {
        penalized_cost: best.cost,
        decision,
        iterations_used: 1,
        oracle_optimal: true,
    })
}
