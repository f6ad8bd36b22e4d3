//! Cost model for binary task placement.
//!
//! Each device either runs its task locally or ships it to the edge
//! server. The model evaluates realized time, energy, and memory per
//! device, the weighted total cost, and feasibility against the six
//! placement constraints. All functions are pure; the solvers call
//! [`evaluate`] on candidate assignment vectors.
//!
//! Units are seconds, joules, and megabytes throughout. Measured
//! profile values (local/encryption energy, memory footprints) are
//! scenario inputs, not computed.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("input length mismatch: {tasks} tasks, {devices} devices, {assignments} assignments")]
    LengthMismatch {
        tasks: usize,
        devices: usize,
        assignments: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// One computation task: input size plus per-bit cycle demands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    /// Input data size in bits.
    pub data_size_bits: f64,
    /// CPU cycles per input bit when executed on the device.
    pub local_cycles_per_bit: f64,
    /// CPU cycles per input bit spent encrypting before transfer.
    pub enc_cycles_per_bit: f64,
    /// CPU cycles per input bit when executed on the edge server.
    pub edge_cycles_per_bit: f64,
    /// Completion deadline in seconds.
    pub max_latency_s: f64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fields = [
            ("data_size_bits", self.data_size_bits),
            ("local_cycles_per_bit", self.local_cycles_per_bit),
            ("enc_cycles_per_bit", self.enc_cycles_per_bit),
            ("edge_cycles_per_bit", self.edge_cycles_per_bit),
            ("max_latency_s", self.max_latency_s),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ModelError::InvalidParameter(format!(
                    "task.{name} must be strictly positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Device capabilities and measured execution profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    /// Device CPU speed in cycles per second.
    pub local_cpu_hz: f64,
    /// Uplink transmission rate in bits per second.
    pub tx_rate_bps: f64,
    /// Minimum required rate, exactly data_size_bits / max_latency_s.
    pub min_rate_bps: f64,
    /// Transmission power in watts.
    pub tx_power_w: f64,
    /// Transmission power ceiling in watts.
    pub max_tx_power_w: f64,
    /// Measured energy for full local execution, joules.
    pub local_energy_j: f64,
    /// Measured energy for encrypting the task, joules.
    pub enc_energy_j: f64,
    /// Measured memory for local execution, megabytes.
    pub local_mem_mb: f64,
    /// Measured memory when offloading (encryption buffers), megabytes.
    pub offload_mem_mb: f64,
    /// Available device memory, megabytes.
    pub mem_cap_mb: f64,
}

impl DeviceProfile {
    /// Check profile invariants against the task it is paired with.
    pub fn validate(&self, task: &TaskSpec) -> Result<(), ModelError> {
        let positive = [
            ("local_cpu_hz", self.local_cpu_hz),
            ("tx_rate_bps", self.tx_rate_bps),
            ("min_rate_bps", self.min_rate_bps),
            ("tx_power_w", self.tx_power_w),
            ("max_tx_power_w", self.max_tx_power_w),
            ("local_energy_j", self.local_energy_j),
            ("enc_energy_j", self.enc_energy_j),
            ("local_mem_mb", self.local_mem_mb),
            ("offload_mem_mb", self.offload_mem_mb),
            ("mem_cap_mb", self.mem_cap_mb),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ModelError::InvalidParameter(format!(
                    "device.{name} must be strictly positive and finite, got {v}"
                )));
            }
        }
        if self.tx_power_w > self.max_tx_power_w {
            return Err(ModelError::InvalidParameter(format!(
                "tx_power_w {} exceeds max_tx_power_w {}",
                self.tx_power_w, self.max_tx_power_w
            )));
        }
        let derived = task.data_size_bits / task.max_latency_s;
        if self.min_rate_bps != derived {
            return Err(ModelError::InvalidParameter(format!(
                "min_rate_bps {} must equal data_size_bits / max_latency_s = {derived}",
                self.min_rate_bps
            )));
        }
        Ok(())
    }
}

/// How the edge budget is split among offloaded devices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AllocationPolicy {
    /// Budget divided equally across the offloading set. Couples the
    /// per-device decisions into a genuine joint problem.
    #[default]
    EqualShare,
    /// Every offloaded device sees the full budget; for single-device
    /// replication tests.
    FullBudgetEach,
}

/// Edge server compute budget and allocation policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeProfile {
    /// Total edge compute budget in cycles per second.
    pub budget_hz: f64,
    pub allocation: AllocationPolicy,
    /// Fixed extra latency on the offload path (e.g. WAN backhaul for a
    /// remote-cloud profile). Zero for a co-located edge server.
    #[serde(default)]
    pub access_delay_s: f64,
}

impl EdgeProfile {
    pub fn new(budget_hz: f64) -> Self {
        Self {
            budget_hz,
            allocation: AllocationPolicy::EqualShare,
            access_delay_s: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.budget_hz > 0.0) || !self.budget_hz.is_finite() {
            return Err(ModelError::InvalidParameter(format!(
                "edge.budget_hz must be strictly positive, got {}",
                self.budget_hz
            )));
        }
        if self.access_delay_s < 0.0 || !self.access_delay_s.is_finite() {
            return Err(ModelError::InvalidParameter(format!(
                "edge.access_delay_s must be non-negative, got {}",
                self.access_delay_s
            )));
        }
        Ok(())
    }

    /// Cycles per second allocated to each of `offloader_count` devices.
    pub fn per_device_share(&self, offloader_count: usize) -> f64 {
        match self.allocation {
            AllocationPolicy::EqualShare => self.budget_hz / offloader_count.max(1) as f64,
            AllocationPolicy::FullBudgetEach => self.budget_hz,
        }
    }
}

/// Weights of the time, energy, and memory cost terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub time: f64,
    pub energy: f64,
    pub memory: f64,
}

pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

impl CostWeights {
    /// Validated constructor: non-negative weights summing to 1.
    pub fn new(time: f64, energy: f64, memory: f64) -> Result<Self, ModelError> {
        let w = Self {
            time,
            energy,
            memory,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn equal() -> Self {
        Self {
            time: 1.0 / 3.0,
            energy: 1.0 / 3.0,
            memory: 1.0 / 3.0,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        for (name, v) in [
            ("time", self.time),
            ("energy", self.energy),
            ("memory", self.memory),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(ModelError::InvalidParameter(format!(
                    "weights.{name} must be non-negative, got {v}"
                )));
            }
        }
        let sum = self.time + self.energy + self.memory;
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(ModelError::InvalidParameter(format!(
                "weights must sum to 1 within {WEIGHT_SUM_TOLERANCE}, got {sum}"
            )));
        }
        Ok(())
    }
}

/// The six placement constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Constraint {
    /// Assignment must be binary. Enforced by the `bool` vector type,
    /// so it never appears in a violation list.
    BinaryDecision,
    /// Realized time must not exceed the task deadline.
    MaxLatency,
    /// Offloading devices must meet the minimum transmission rate.
    MinTxRate,
    /// Realized memory must fit the device memory cap.
    MemoryCap,
    /// Transmission power must be positive and below the ceiling.
    TxPower,
    /// Each offloaded device must get a positive share within budget.
    EdgeBudget,
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Constraint::BinaryDecision => "binary-decision",
            Constraint::MaxLatency => "max-latency",
            Constraint::MinTxRate => "min-tx-rate",
            Constraint::MemoryCap => "memory-cap",
            Constraint::TxPower => "tx-power",
            Constraint::EdgeBudget => "edge-budget",
        };
        f.write_str(name)
    }
}

/// One constraint violated by one device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub device: usize,
    pub constraint: Constraint,
}

/// Realized per-device costs for one assignment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceCost {
    pub offloaded: bool,
    /// Time the task would take locally, seconds.
    pub local_time_s: f64,
    /// Time on the offload path; only defined when offloaded (the edge
    /// share depends on the offloading set).
    pub offload_time_s: Option<f64>,
    /// Energy on the offload path (encryption + transmission), joules.
    pub offload_energy_j: f64,
    /// Transmission component of the offload energy, joules.
    pub tx_energy_j: f64,
    /// Edge cycles per second granted; None for local execution.
    pub edge_share_hz: Option<f64>,
    /// Realized time under the assignment, seconds.
    pub time_s: f64,
    /// Realized energy under the assignment, joules.
    pub energy_j: f64,
    /// Realized memory under the assignment, megabytes.
    pub memory_mb: f64,
}

/// Full evaluation of one binary assignment vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffloadDecision {
    /// true = offload to edge, false = execute locally.
    pub assignments: Vec<bool>,
    pub devices: Vec<DeviceCost>,
    /// Weighted sum over devices of time/energy/memory terms.
    pub total_cost: f64,
    pub feasible: bool,
    pub violations: Vec<Violation>,
}

impl OffloadDecision {
    /// Empty decision for zero devices.
    pub fn empty() -> Self {
        Self {
            assignments: Vec::new(),
            devices: Vec::new(),
            total_cost: 0.0,
            feasible: true,
            violations: Vec::new(),
        }
    }

    pub fn offloaded_count(&self) -> usize {
        self.assignments.iter().filter(|x| **x).count()
    }
}

/// Local execution time: data · cycles-per-bit / cpu-speed.
pub fn local_time(task: &TaskSpec, dev: &DeviceProfile) -> f64 {
    task.data_size_bits * task.local_cycles_per_bit / dev.local_cpu_hz
}

/// Offload path time: encryption + transmission + edge execution.
pub fn offload_time(task: &TaskSpec, dev: &DeviceProfile, edge_share_hz: f64) -> f64 {
    task.data_size_bits * task.enc_cycles_per_bit / dev.local_cpu_hz
        + task.data_size_bits / dev.tx_rate_bps
        + task.data_size_bits * task.edge_cycles_per_bit / edge_share_hz
}

/// Transmission energy: power · transfer time.
pub fn tx_energy(task: &TaskSpec, dev: &DeviceProfile) -> f64 {
    dev.tx_power_w * task.data_size_bits / dev.tx_rate_bps
}

/// Total offload energy: encryption energy + transmission energy.
pub fn offload_energy(task: &TaskSpec, dev: &DeviceProfile) -> f64 {
    dev.enc_energy_j + tx_energy(task, dev)
}

/// Evaluate one assignment vector: per-device realized costs, the
/// weighted total, and the violated-constraint list.
///
/// Infeasible assignments never error; the solvers rely on penalty
/// evaluation of infeasible candidates.
pub fn evaluate(
    tasks: &[TaskSpec],
    devices: &[DeviceProfile],
    edge: &EdgeProfile,
    weights: &CostWeights,
    assignments: &[bool],
) -> Result<OffloadDecision, ModelError> {
    if tasks.len() != devices.len() || tasks.len() != assignments.len() {
        return Err(ModelError::LengthMismatch {
            tasks: tasks.len(),
            devices: devices.len(),
            assignments: assignments.len(),
        });
    }

    let offloader_count = assignments.iter().filter(|x| **x).count();
    let share = edge.per_device_share(offloader_count);

    let mut device_costs = Vec::with_capacity(tasks.len());
    let mut violations = Vec::new();
    let mut total_cost = 0.0;

    for (n, ((task, dev), &offloaded)) in tasks.iter().zip(devices).zip(assignments).enumerate() {
        let t_local = local_time(task, dev);
        let e_tx = tx_energy(task, dev);
        let e_offload = offload_energy(task, dev);

        let (t_offload, edge_share, time_s, energy_j, memory_mb) = if offloaded {
            let t = offload_time(task, dev, share) + edge.access_delay_s;
            (Some(t), Some(share), t, e_offload, dev.offload_mem_mb)
        } else {
            (None, None, t_local, dev.local_energy_j, dev.local_mem_mb)
        };

        if time_s > task.max_latency_s {
            violations.push(Violation {
                device: n,
                constraint: Constraint::MaxLatency,
            });
        }
        // Minimum-rate check in product form: rate · deadline >= data.
        if offloaded && dev.tx_rate_bps * task.max_latency_s < task.data_size_bits {
            violations.push(Violation {
                device: n,
                constraint: Constraint::MinTxRate,
            });
        }
        if memory_mb > dev.mem_cap_mb {
            violations.push(Violation {
                device: n,
                constraint: Constraint::MemoryCap,
            });
        }
        if !(dev.tx_power_w > 0.0) || dev.tx_power_w > dev.max_tx_power_w {
            violations.push(Violation {
                device: n,
                constraint: Constraint::TxPower,
            });
        }
        if offloaded && (!(share > 0.0) || share > edge.budget_hz) {
            violations.push(Violation {
                device: n,
                constraint: Constraint::EdgeBudget,
            });
        }

        total_cost += weights.time * time_s + weights.energy * energy_j + weights.memory * memory_mb;

        device_costs.push(DeviceCost {
            offloaded,
            local_time_s: t_local,
            offload_time_s: t_offload,
            offload_energy_j: e_offload,
            tx_energy_j: e_tx,
            edge_share_hz: edge_share,
            time_s,
            energy_j,
            memory_mb,
        });
    }

    Ok(OffloadDecision {
        assignments: assignments.to_vec(),
        devices: device_costs,
        total_cost,
        feasible: violations.is_empty(),
        violations,
    })
}

/// [`evaluate`] with per-term min-max normalization across devices.
///
/// Each of the three terms is rescaled to [0, 1] over the device vector
/// before weighting. Experimental alternative to the raw objective;
/// feasibility is unaffected.
pub fn evaluate_normalized(
    tasks: &[TaskSpec],
    devices: &[DeviceProfile],
    edge: &EdgeProfile,
    weights: &CostWeights,
    assignments: &[bool],
) -> Result<OffloadDecision, ModelError> {
    let mut decision = evaluate(tasks, devices, edge, weights, assignments)?;
    let norm = |values: Vec<f64>| -> Vec<f64> {
        let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if max > min {
            values.iter().map(|v| (v - min) / (max - min)).collect()
        } else {
            vec![0.0; values.len()]
        }
    };
    let times = norm(decision.devices.iter().map(|d| d.time_s).collect());
    let energies = norm(decision.devices.iter().map(|d| d.energy_j).collect());
    let memories = norm(decision.devices.iter().map(|d| d.memory_mb).collect());
    decision.total_cost = (0..decision.devices.len())
        .map(|i| weights.time * times[i] + weights.energy * energies[i] + weights.memory * memories[i])
        .sum();
    Ok(decision)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn task() -> TaskSpec {
        TaskSpec {
            data_size_bits: 1e6,
            local_cycles_per_bit: 1000.0,
            enc_cycles_per_bit: 200.0,
            edge_cycles_per_bit: 1000.0,
            max_latency_s: 10.0,
        }
    }

    fn device(task: &TaskSpec) -> DeviceProfile {
        DeviceProfile {
            local_cpu_hz: 1e9,
            tx_rate_bps: 5e6,
            min_rate_bps: task.data_size_bits / task.max_latency_s,
            tx_power_w: 0.02,
            max_tx_power_w: 0.02,
            local_energy_j: 0.01,
            enc_energy_j: 0.01,
            local_mem_mb: 30.0,
            offload_mem_mb: 20.0,
            mem_cap_mb: 512.0,
        }
    }

    #[test]
    fn local_time_direct_values() {
        let t = task();
        let d = device(&t);
        assert_eq!(local_time(&t, &d), 1.0);

        let mut t2 = t.clone();
        t2.local_cycles_per_bit = 1500.0;
        assert_eq!(local_time(&t2, &d), 1.5);
    }

    #[test]
    fn local_time_is_linear_in_data_size() {
        let t = task();
        let d = device(&t);
        let mut tiny = t.clone();
        tiny.data_size_bits = 1e-3;
        assert_relative_eq!(local_time(&tiny, &d), 1e-9, max_relative = 1e-12);
    }

    #[test]
    fn offload_time_three_terms() {
        let t = task();
        let d = device(&t);
        assert_relative_eq!(offload_time(&t, &d, 5e9), 0.6, max_relative = 1e-12);
    }

    #[test]
    fn offload_time_degenerates_to_local_time() {
        let mut t = task();
        t.enc_cycles_per_bit = f64::MIN_POSITIVE; // effectively zero, stays valid
        let mut d = device(&t);
        d.tx_rate_bps = f64::INFINITY;
        // with edge share equal to the device CPU and matching cycles,
        // only the execution term remains
        let t_off = t.data_size_bits * t.edge_cycles_per_bit / d.local_cpu_hz
            + t.data_size_bits * t.enc_cycles_per_bit / d.local_cpu_hz;
        assert_relative_eq!(
            offload_time(&t, &d, d.local_cpu_hz),
            t_off,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            offload_time(&t, &d, d.local_cpu_hz),
            local_time(&t, &d),
            max_relative = 1e-9
        );
    }

    #[test]
    fn doubling_rate_halves_only_transfer_term() {
        let t = task();
        let mut d = device(&t);
        let before = offload_time(&t, &d, 5e9);
        let transfer = t.data_size_bits / d.tx_rate_bps;
        d.tx_rate_bps *= 2.0;
        let after = offload_time(&t, &d, 5e9);
        assert_relative_eq!(before - after, transfer / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn offload_energy_direct_values() {
        let t = task();
        let d = device(&t);
        assert_relative_eq!(tx_energy(&t, &d), 0.004, max_relative = 1e-12);
        assert_relative_eq!(offload_energy(&t, &d), 0.014, max_relative = 1e-12);
    }

    #[test]
    fn zero_data_leaves_only_encryption_energy() {
        let t = task();
        let d = device(&t);
        let mut t0 = t.clone();
        t0.data_size_bits = 0.0; // boundary: model value, not a validated input
        assert_eq!(offload_energy(&t0, &d), d.enc_energy_j);
    }

    #[test]
    fn energy_at_power_ceiling() {
        let t = task();
        let mut d = device(&t);
        d.enc_energy_j = f64::MIN_POSITIVE;
        d.tx_power_w = d.max_tx_power_w;
        assert_relative_eq!(
            offload_energy(&t, &d),
            d.max_tx_power_w * t.data_size_bits / d.tx_rate_bps,
            max_relative = 1e-9
        );
    }

    #[test]
    fn all_local_assignment_uses_local_triple() {
        let t = task();
        let d = device(&t);
        let tasks = vec![t.clone(), t.clone(), t];
        let devices = vec![d.clone(), d.clone(), d];
        let edge = EdgeProfile::new(5e9);
        let w = CostWeights::equal();
        let decision = evaluate(&tasks, &devices, &edge, &w, &[false, false, false]).unwrap();
        assert!(decision.feasible);
        for (dc, dev) in decision.devices.iter().zip(&devices) {
            assert_eq!(dc.time_s, dc.local_time_s);
            assert_eq!(dc.energy_j, dev.local_energy_j);
            assert_eq!(dc.memory_mb, dev.local_mem_mb);
        }
    }

    #[test]
    fn single_device_cost_matches_weighted_sum() {
        let t = task();
        let d = device(&t);
        let edge = EdgeProfile::new(5e9);
        let w = CostWeights::equal();
        let decision = evaluate(&[t], &[d], &edge, &w, &[false]).unwrap();
        // local triple (1.0 s, 0.01 J, 30 MB) with equal weights
        assert_relative_eq!(decision.total_cost, 10.336666666666668, max_relative = 1e-12);
    }

    #[test]
    fn deadline_violation_reports_max_latency() {
        let mut t = task();
        t.max_latency_s = 0.5; // local takes 1.0 s
        let mut d = device(&t);
        d.min_rate_bps = t.data_size_bits / t.max_latency_s;
        let edge = EdgeProfile::new(5e9);
        let w = CostWeights::equal();
        let decision = evaluate(&[t], &[d], &edge, &w, &[false]).unwrap();
        assert!(!decision.feasible);
        assert_eq!(
            decision.violations,
            vec![Violation {
                device: 0,
                constraint: Constraint::MaxLatency
            }]
        );
    }

    #[test]
    fn min_rate_constraint_uses_product_form() {
        let mut t = task();
        t.data_size_bits = 3.0;
        t.max_latency_s = 7.0;
        let mut d = device(&t);
        d.min_rate_bps = t.data_size_bits / t.max_latency_s;
        // rate exactly at the rational boundary: rate * deadline == data
        d.tx_rate_bps = t.data_size_bits / 7.0;
        let edge = EdgeProfile::new(5e9);
        let w = CostWeights::equal();
        let decision = evaluate(&[t.clone()], &[d.clone()], &edge, &w, &[true]).unwrap();
        let violated = decision
            .violations
            .iter()
            .any(|v| v.constraint == Constraint::MinTxRate);
        assert_eq!(violated, d.tx_rate_bps * t.max_latency_s < t.data_size_bits);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let t = task();
        let d = device(&t);
        let edge = EdgeProfile::new(5e9);
        let w = CostWeights::equal();
        let err = evaluate(&[t], &[d], &edge, &w, &[true, false]).unwrap_err();
        assert!(matches!(err, ModelError::LengthMismatch { .. }));
    }

    #[test]
    fn equal_share_divides_budget() {
        let edge = EdgeProfile::new(6e9);
        assert_eq!(edge.per_device_share(1), 6e9);
        assert_eq!(edge.per_device_share(2), 3e9);
        assert_eq!(edge.per_device_share(3), 2e9);
        let full = EdgeProfile {
            allocation: AllocationPolicy::FullBudgetEach,
            ..EdgeProfile::new(6e9)
        };
        assert_eq!(full.per_device_share(3), 6e9);
    }

    #[test]
    fn weights_must_sum_to_one() {
        assert!(CostWeights::new(0.5, 0.25, 0.25).is_ok());
        assert!(CostWeights::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0).is_ok());
        assert!(CostWeights::new(0.5, 0.5, 0.5).is_err());
        assert!(CostWeights::new(-0.5, 1.0, 0.5).is_err());
    }

    #[test]
    fn offload_terms_strictly_improve_with_rate_and_share() {
        let t = task();
        let d = device(&t);
        let mut faster = d.clone();
        faster.tx_rate_bps *= 1.5;
        assert!(offload_time(&t, &faster, 5e9) < offload_time(&t, &d, 5e9));
        assert!(offload_energy(&t, &faster) < offload_energy(&t, &d));
        assert!(offload_time(&t, &d, 6e9) < offload_time(&t, &d, 5e9));
    }

    #[test]
    fn normalized_objective_is_opt_in() {
        let t = task();
        let d = device(&t);
        let edge = EdgeProfile::new(5e9);
        let w = CostWeights::equal();
        let tasks = vec![t.clone(), t];
        let devs = vec![d.clone(), d];
        let raw = evaluate(&tasks, &devs, &edge, &w, &[false, true]).unwrap();
        let normed = evaluate_normalized(&tasks, &devs, &edge, &w, &[false, true]).unwrap();
        assert_ne!(raw.total_cost, normed.total_cost);
        assert!(normed.total_cost <= 2.0 + 1e-12);
        assert_eq!(raw.feasible, normed.feasible);
    }

    mod properties {
        use super::*;
        use crate::offload::synth::random_instance;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            // An all-local evaluation cannot depend on the edge profile.
            #[test]
            fn all_local_ignores_edge_profile(seed in 0u64..500, budget in 1e8f64..1e10) {
                let inst = random_instance(seed, 4);
                let x = vec![false; 4];
                let a = evaluate(&inst.tasks, &inst.devices, &inst.edge, &inst.weights, &x).unwrap();
                let other = EdgeProfile::new(budget);
                let b = evaluate(&inst.tasks, &inst.devices, &other, &inst.weights, &x).unwrap();
                prop_assert_eq!(a, b);
            }

            // Permuting devices permutes the per-device rows and leaves
            // the all-local total unchanged.
            #[test]
            fn all_local_is_permutation_equivariant(seed in 0u64..500, swap in 0usize..3) {
                let inst = random_instance(seed, 4);
                let x = vec![false; 4];
                let a = evaluate(&inst.tasks, &inst.devices, &inst.edge, &inst.weights, &x).unwrap();
                let mut tasks = inst.tasks.clone();
                let mut devices = inst.devices.clone();
                tasks.swap(swap, swap + 1);
                devices.swap(swap, swap + 1);
                let b = evaluate(&tasks, &devices, &inst.edge, &inst.weights, &x).unwrap();
                let mut expected = a.devices.clone();
                expected.swap(swap, swap + 1);
                prop_assert_eq!(&b.devices, &expected);
                prop_assert!((a.total_cost - b.total_cost).abs() <= 1e-9 * a.total_cost.abs());
            }

            // Inflating any single device's profile terms never lowers
            // the weighted total.
            #[test]
            fn total_cost_is_monotone_in_each_term(seed in 0u64..500, which in 0usize..3, factor in 1.0f64..3.0) {
                let inst = random_instance(seed, 4);
                let x = vec![false; 4];
                let base = evaluate(&inst.tasks, &inst.devices, &inst.edge, &inst.weights, &x).unwrap();
                let mut tasks = inst.tasks.clone();
                let mut devices = inst.devices.clone();
                match which {
                    0 => tasks[0].local_cycles_per_bit *= factor,   // time up
                    1 => devices[0].local_energy_j *= factor,       // energy up
                    _ => devices[0].local_mem_mb *= factor,         // memory up
                }
                let bumped = evaluate(&tasks, &devices, &inst.edge, &inst.weights, &x).unwrap();
                prop_assert!(bumped.total_cost >= base.total_cost);
            }

            // The minimum-rate check agrees with its product form on
            // the exact bit pattern.
            #[test]
            fn min_rate_matches_product_form(seed in 0u64..500, rate in 1e3f64..1e9) {
                let inst = random_instance(seed, 1);
                let mut devices = inst.devices.clone();
                devices[0].tx_rate_bps = rate;
                let x = vec![true];
                let decision = evaluate(&inst.tasks, &devices, &inst.edge, &inst.weights, &x).unwrap();
                let violated = decision.violations.iter().any(|v| v.constraint == Constraint::MinTxRate);
                let product_ok = rate * inst.tasks[0].max_latency_s >= inst.tasks[0].data_size_bits;
                prop_assert_eq!(violated, !product_ok);
            }
        }
    }
}
