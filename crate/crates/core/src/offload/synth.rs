//! Seeded synthesis of placement problem instances for verification,
//! fuzzing, and benchmarks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::model::{AllocationPolicy, CostWeights, DeviceProfile, EdgeProfile, TaskSpec};
use super::Instance;

/// Ranges the generator draws from. Centered on a phone-class device
/// talking to a rack-class edge server.
#[derive(Debug, Clone)]
pub struct SynthParams {
    pub data_size_bits: (f64, f64),
    pub local_cycles_per_bit: (f64, f64),
    pub enc_cycles_per_bit: (f64, f64),
    /// Edge cycles per bit as a factor of the local figure.
    pub edge_cycle_factor: (f64, f64),
    /// Deadline as a factor of the local execution time.
    pub deadline_factor: (f64, f64),
    pub local_cpu_hz: (f64, f64),
    pub tx_rate_bps: (f64, f64),
    pub tx_power_w: f64,
    pub local_energy_j: (f64, f64),
    pub enc_energy_j: (f64, f64),
    pub local_mem_mb: (f64, f64),
    /// Offload memory as a factor of local memory.
    pub offload_mem_factor: (f64, f64),
    pub mem_cap_mb: (f64, f64),
    pub edge_budget_hz: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            data_size_bits: (8e5, 4e7),
            local_cycles_per_bit: (100.0, 400.0),
            enc_cycles_per_bit: (5.0, 20.0),
            edge_cycle_factor: (0.8, 1.2),
            // Local execution always fits the deadline, so a feasible
            // assignment (all-local) exists in every default instance.
            deadline_factor: (1.05, 3.0),
            local_cpu_hz: (0.8e9, 1.2e9),
            tx_rate_bps: (2e6, 2e7),
            tx_power_w: 0.02,
            local_energy_j: (0.2, 2.0),
            enc_energy_j: (0.01, 0.1),
            local_mem_mb: (30.0, 100.0),
            offload_mem_factor: (0.5, 1.0),
            mem_cap_mb: (128.0, 512.0),
            edge_budget_hz: 5e9,
        }
    }
}

impl SynthParams {
    /// A mix with tight deadlines and memory caps: many candidates, and
    /// occasionally whole instances, are infeasible. For constraint
    /// fuzzing rather than optimality checks.
    pub fn adversarial() -> Self {
        Self {
            deadline_factor: (0.6, 2.0),
            mem_cap_mb: (40.0, 512.0),
            ..Self::default()
        }
    }
}

/// Deterministic random instance with `n` devices.
pub fn random_instance(seed: u64, n: usize) -> Instance {
    random_instance_with(seed, n, &SynthParams::default())
}

pub fn random_instance_with(seed: u64, n: usize, params: &SynthParams) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::with_capacity(n);
    let mut devices = Vec::with_capacity(n);
    for _ in 0..n {
        let data_size_bits = rng.gen_range(params.data_size_bits.0..=params.data_size_bits.1);
        let local_cycles_per_bit =
            rng.gen_range(params.local_cycles_per_bit.0..=params.local_cycles_per_bit.1);
        let enc_cycles_per_bit =
            rng.gen_range(params.enc_cycles_per_bit.0..=params.enc_cycles_per_bit.1);
        let edge_cycles_per_bit = local_cycles_per_bit
            * rng.gen_range(params.edge_cycle_factor.0..=params.edge_cycle_factor.1);
        let local_cpu_hz = rng.gen_range(params.local_cpu_hz.0..=params.local_cpu_hz.1);
        let local_time = data_size_bits * local_cycles_per_bit / local_cpu_hz;
        let max_latency_s =
            local_time * rng.gen_range(params.deadline_factor.0..=params.deadline_factor.1);
        let task = TaskSpec {
            data_size_bits,
            local_cycles_per_bit,
            enc_cycles_per_bit,
            edge_cycles_per_bit,
            max_latency_s,
        };
        let local_mem_mb = rng.gen_range(params.local_mem_mb.0..=params.local_mem_mb.1);
        let device = DeviceProfile {
            local_cpu_hz,
            tx_rate_bps: rng.gen_range(params.tx_rate_bps.0..=params.tx_rate_bps.1),
            min_rate_bps: data_size_bits / max_latency_s,
            tx_power_w: params.tx_power_w,
            max_tx_power_w: params.tx_power_w,
            local_energy_j: rng.gen_range(params.local_energy_j.0..=params.local_energy_j.1),
            enc_energy_j: rng.gen_range(params.enc_energy_j.0..=params.enc_energy_j.1),
            local_mem_mb,
            offload_mem_mb: local_mem_mb
                * rng.gen_range(params.offload_mem_factor.0..=params.offload_mem_factor.1),
            mem_cap_mb: rng.gen_range(params.mem_cap_mb.0..=params.mem_cap_mb.1),
        };
        tasks.push(task);
        devices.push(device);
    }
    Instance {
        tasks,
        devices,
        edge: EdgeProfile {
            budget_hz: params.edge_budget_hz,
            allocation: AllocationPolicy::EqualShare,
            access_delay_s: 0.0,
        },
        weights: CostWeights::equal(),
    }
}
