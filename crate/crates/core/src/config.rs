//! Scenario configuration: a versioned JSON schema covering topology,
//! task profiles, cost weights, workload, and consensus parameters.
//!
//! Every field has a default so partial files stay valid; unknown
//! fields are rejected so experiment configs cannot silently drift.
//! Validation reports the offending field path.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::offload::AllocationPolicy;
use crate::store::ReplicationMode;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
#[error("config error at {path}: {message}")]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl ConfigError {
    fn new(path: &str, message: impl Into<String>) -> Self {
        Self {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub topology: TopologyConfig,
    pub task: TaskConfig,
    pub weights: WeightsConfig,
    pub workload: WorkloadConfig,
    pub consensus: ConsensusConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 0,
            topology: TopologyConfig::default(),
            task: TaskConfig::default(),
            weights: WeightsConfig::default(),
            workload: WorkloadConfig::default(),
            consensus: ConsensusConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub propagation_s: f64,
    pub bandwidth_bps: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        Self {
            propagation_s: 0.005,
            bandwidth_bps: 1e8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub hospitals: usize,
    pub devices_per_hospital: usize,
    pub patients_per_hospital: usize,
    pub users_per_hospital: usize,
    /// Device/user to edge-server access links.
    pub device_link: LinkConfig,
    /// Edge-server to edge-server links (also to the lookup/authority
    /// helper nodes used by baseline modes).
    pub mec_link: LinkConfig,
    /// Edge-server to remote-cloud link for the cloud baseline.
    pub cloud_link: LinkConfig,
    /// Serve each edge server's requests through a single FIFO queue.
    pub fifo_queue: bool,
    /// Per-request service time at a serving node when queuing is on.
    pub mec_service_s: f64,
    pub replication: ReplicationMode,
    /// Node-id pairs whose link is down, e.g. ["hospital-0","hospital-1"].
    pub links_down: Vec<(String, String)>,
    /// Requester gives up after this long without a response.
    pub retry_timeout_s: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            hospitals: 4,
            devices_per_hospital: 3,
            patients_per_hospital: 3,
            users_per_hospital: 2,
            device_link: LinkConfig {
                propagation_s: 0.002,
                bandwidth_bps: 2e7,
            },
            mec_link: LinkConfig {
                propagation_s: 0.005,
                bandwidth_bps: 1e8,
            },
            cloud_link: LinkConfig {
                propagation_s: 0.1,
                bandwidth_bps: 5e7,
            },
            fifo_queue: false,
            mec_service_s: 0.03,
            replication: ReplicationMode::Lazy,
            links_down: Vec::new(),
            retry_timeout_s: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaskConfig {
    /// Total device cycles per task, Gcycles, drawn uniformly per task.
    pub local_gcycles: (f64, f64),
    /// Edge total cycles as a factor of the device figure.
    pub edge_cycle_factor: f64,
    /// Encryption cost per input bit, cycles.
    pub enc_cycles_per_bit: f64,
    pub max_latency_s: f64,
    pub local_cpu_hz: f64,
    pub edge_budget_hz: f64,
    pub allocation: AllocationPolicy,
    pub tx_rate_bps: f64,
    pub tx_power_w: f64,
    pub max_tx_power_w: f64,
    /// Measured local-execution energy, joules per Gcycle.
    pub local_energy_j_per_gcycle: f64,
    pub enc_energy_j: f64,
    pub local_mem_base_mb: f64,
    pub local_mem_per_kb: f64,
    pub offload_mem_base_mb: f64,
    pub offload_mem_per_kb: f64,
    pub mem_cap_mb: f64,
    /// Extra fixed delay on the remote-cloud offload path.
    pub cloud_wan_delay_s: f64,
    /// Compute budget granted by the remote cloud profile.
    pub cloud_budget_hz: f64,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            local_gcycles: (0.8, 1.5),
            edge_cycle_factor: 1.0,
            enc_cycles_per_bit: 5.0,
            max_latency_s: 10.0,
            local_cpu_hz: 1e9,
            edge_budget_hz: 5e9,
            allocation: AllocationPolicy::EqualShare,
            tx_rate_bps: 5e7,
            tx_power_w: 0.02,
            max_tx_power_w: 0.02,
            local_energy_j_per_gcycle: 0.8,
            enc_energy_j: 0.05,
            local_mem_base_mb: 16.0,
            local_mem_per_kb: 0.08,
            offload_mem_base_mb: 13.0,
            offload_mem_per_kb: 0.067,
            mem_cap_mb: 512.0,
            cloud_wan_delay_s: 0.15,
            cloud_budget_hz: 4e9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsConfig {
    pub time: f64,
    pub energy: f64,
    pub memory: f64,
}

impl Default for WeightsConfig {
    fn default() -> Self {
        Self {
            time: 1.0 / 3.0,
            energy: 1.0 / 3.0,
            memory: 1.0 / 3.0,
        }
    }
}

/// How requests map onto users and patients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    /// Requests rotate round-robin over hospitals and users, and
    /// cross-hospital targets walk the hospital ring. Keeps queues
    /// balanced so load trends are clean.
    #[default]
    Balanced,
    /// Seeded random user and patient choices.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub requests: usize,
    /// Per-request response deadline, seconds. Requests finishing later
    /// count as rejected.
    pub deadline_s: f64,
    /// Record payload size range in bytes, drawn uniformly per patient.
    /// The default is a single fixed size: 625 kB, i.e. 5 Mbit.
    pub record_size_bytes: (usize, usize),
    /// Fraction of requests targeting a different hospital.
    pub remote_fraction: f64,
    pub assignment: Assignment,
    /// Gap between consecutive request submissions, seconds.
    pub stagger_s: f64,
    /// File sizes the placement sweep walks, kB.
    pub sweep_sizes_kb: Vec<u64>,
    /// Request counts the sharing benchmark walks.
    pub bench_request_counts: Vec<usize>,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            requests: 6,
            deadline_s: 5.0,
            record_size_bytes: (625_000, 625_000),
            remote_fraction: 1.0,
            assignment: Assignment::Balanced,
            stagger_s: 0.001,
            sweep_sizes_kb: vec![200, 400, 600, 800, 1000],
            bench_request_counts: vec![2, 4, 6, 8, 10, 12],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusConfig {
    /// Consensus nodes; one per hospital, must equal 3f+1.
    pub nodes: usize,
    pub fault_budget: usize,
    pub batch_size: usize,
    pub batch_timeout_s: f64,
    /// Latency charged per consensus decision.
    pub round_latency_s: f64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            nodes: 4,
            fault_budget: 1,
            batch_size: 4,
            batch_timeout_s: 1.0,
            round_latency_s: 0.03,
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(json: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(json)
            .map_err(|e| ConfigError::new("$", format!("invalid JSON config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError::new("$", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::new(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        let t = &self.topology;
        Self::positive_count("topology.hospitals", t.hospitals)?;
        Self::positive_count("topology.devices_per_hospital", t.devices_per_hospital)?;
        Self::positive_count("topology.patients_per_hospital", t.patients_per_hospital)?;
        Self::positive_count("topology.users_per_hospital", t.users_per_hospital)?;
        for (path, link) in [
            ("topology.device_link", &t.device_link),
            ("topology.mec_link", &t.mec_link),
            ("topology.cloud_link", &t.cloud_link),
        ] {
            if link.propagation_s < 0.0 || !link.propagation_s.is_finite() {
                return Err(ConfigError::new(path, "propagation_s must be >= 0"));
            }
            if !(link.bandwidth_bps > 0.0) {
                return Err(ConfigError::new(path, "bandwidth_bps must be > 0"));
            }
        }
        if t.mec_service_s < 0.0 {
            return Err(ConfigError::new("topology.mec_service_s", "must be >= 0"));
        }
        if !(t.retry_timeout_s > 0.0) {
            return Err(ConfigError::new("topology.retry_timeout_s", "must be > 0"));
        }

        let k = &self.task;
        if !(k.local_gcycles.0 > 0.0) || k.local_gcycles.1 < k.local_gcycles.0 {
            return Err(ConfigError::new(
                "task.local_gcycles",
                "range must be positive and ordered",
            ));
        }
        for (path, v) in [
            ("task.edge_cycle_factor", k.edge_cycle_factor),
            ("task.enc_cycles_per_bit", k.enc_cycles_per_bit),
            ("task.max_latency_s", k.max_latency_s),
            ("task.local_cpu_hz", k.local_cpu_hz),
            ("task.edge_budget_hz", k.edge_budget_hz),
            ("task.tx_rate_bps", k.tx_rate_bps),
            ("task.tx_power_w", k.tx_power_w),
            ("task.max_tx_power_w", k.max_tx_power_w),
            (
                "task.local_energy_j_per_gcycle",
                k.local_energy_j_per_gcycle,
            ),
            ("task.enc_energy_j", k.enc_energy_j),
            ("task.mem_cap_mb", k.mem_cap_mb),
            ("task.cloud_budget_hz", k.cloud_budget_hz),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(ConfigError::new(path, format!("must be > 0, got {v}")));
            }
        }
        if k.tx_power_w > k.max_tx_power_w {
            return Err(ConfigError::new(
                "task.tx_power_w",
                "must not exceed task.max_tx_power_w",
            ));
        }
        if k.cloud_wan_delay_s < 0.0 {
            return Err(ConfigError::new("task.cloud_wan_delay_s", "must be >= 0"));
        }

        let w = &self.weights;
        crate::offload::CostWeights::new(w.time, w.energy, w.memory)
            .map_err(|e| ConfigError::new("weights", e.to_string()))?;

        let wl = &self.workload;
        if !(wl.deadline_s > 0.0) {
            return Err(ConfigError::new("workload.deadline_s", "must be > 0"));
        }
        if wl.record_size_bytes.0 == 0 || wl.record_size_bytes.1 < wl.record_size_bytes.0 {
            return Err(ConfigError::new(
                "workload.record_size_bytes",
                "range must be positive and ordered",
            ));
        }
        if !(0.0..=1.0).contains(&wl.remote_fraction) {
            return Err(ConfigError::new(
                "workload.remote_fraction",
                "must lie in [0, 1]",
            ));
        }
        if wl.stagger_s < 0.0 {
            return Err(ConfigError::new("workload.stagger_s", "must be >= 0"));
        }
        if wl.sweep_sizes_kb.is_empty() || wl.sweep_sizes_kb.iter().any(|&s| s == 0) {
            return Err(ConfigError::new(
                "workload.sweep_sizes_kb",
                "must list at least one positive size",
            ));
        }
        if wl.bench_request_counts.is_empty() || wl.bench_request_counts.iter().any(|&c| c == 0) {
            return Err(ConfigError::new(
                "workload.bench_request_counts",
                "must list at least one positive count",
            ));
        }
        if wl.remote_fraction > 0.0 && t.hospitals < 2 {
            return Err(ConfigError::new(
                "workload.remote_fraction",
                "cross-hospital requests need at least 2 hospitals",
            ));
        }

        let c = &self.consensus;
        if c.nodes != 3 * c.fault_budget + 1 {
            return Err(ConfigError::new(
                "consensus.nodes",
                format!("must equal 3f+1 (f = {}), got {}", c.fault_budget, c.nodes),
            ));
        }
        if c.nodes != t.hospitals {
            return Err(ConfigError::new(
                "consensus.nodes",
                format!(
                    "one consensus node per hospital: expected {}, got {}",
                    t.hospitals, c.nodes
                ),
            ));
        }
        Self::positive_count("consensus.batch_size", c.batch_size)?;
        if !(c.batch_timeout_s > 0.0) {
            return Err(ConfigError::new("consensus.batch_timeout_s", "must be > 0"));
        }
        if c.round_latency_s < 0.0 {
            return Err(ConfigError::new("consensus.round_latency_s", "must be >= 0"));
        }
        Ok(())
    }

    fn positive_count(path: &str, v: usize) -> Result<(), ConfigError> {
        if v == 0 {
            return Err(ConfigError::new(path, "must be at least 1"));
        }
        Ok(())
    }

    pub fn cost_weights(&self) -> crate::offload::CostWeights {
        crate::offload::CostWeights {
            time: self.weights.time,
            energy: self.weights.energy,
            memory: self.weights.memory,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ScenarioConfig::default().validate().unwrap();
    }

    #[test]
    fn json_round_trip() {
        let cfg = ScenarioConfig::default();
        let parsed = ScenarioConfig::from_json(&cfg.to_json_pretty()).unwrap();
        assert_eq!(parsed, cfg);
    }

    #[test]
    fn partial_json_uses_defaults() {
        let cfg = ScenarioConfig::from_json(r#"{"seed": 9}"#).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.topology.hospitals, 4);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ScenarioConfig::from_json(r#"{"sede": 9}"#).is_err());
        assert!(ScenarioConfig::from_json(r#"{"topology": {"hospitls": 2}}"#).is_err());
    }

    #[test]
    fn errors_carry_field_paths() {
        let mut cfg = ScenarioConfig::default();
        cfg.topology.hospitals = 0;
        let err = cfg.validate().unwrap_err();
        assert_eq!(err.path, "topology.hospitals");

        let mut cfg = ScenarioConfig::default();
        cfg.weights.time = 0.9;
        assert_eq!(cfg.validate().unwrap_err().path, "weights");

        let mut cfg = ScenarioConfig::default();
        cfg.consensus.nodes = 5;
        cfg.topology.hospitals = 5;
        assert_eq!(cfg.validate().unwrap_err().path, "consensus.nodes");
    }

    #[test]
    fn default_task_profile_matches_reference_setup() {
        let cfg = ScenarioConfig::default();
        assert_eq!(cfg.task.max_latency_s, 10.0);
        assert_eq!(cfg.task.local_cpu_hz, 1e9);
        assert_eq!(cfg.task.edge_budget_hz, 5e9);
        assert_eq!(cfg.task.max_tx_power_w, 0.02);
        // 5 Mbit record over a 10 s deadline: 0.5 Mbps minimum rate
        let bits = cfg.workload.record_size_bytes.0 as f64 * 8.0;
        assert_eq!(bits / cfg.task.max_latency_s, 0.5e6);
    }
}
