//! Result rows emitted by scenario runs, plus the CSV writer all
//! harness output goes through.

use serde::{Deserialize, Serialize};

use super::time::SimTime;

/// Same-hospital or cross-hospital retrieval path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Case {
    /// Requester and patient share a hospital.
    Local,
    /// The record lives at another hospital.
    Remote,
}

impl std::fmt::Display for Case {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Case::Local => "local",
            Case::Remote => "remote",
        })
    }
}

/// How a request ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RequestStatus {
    /// Data returned to the requester.
    Served,
    /// Authentication denied the request.
    Denied,
    /// The patient has no committed record.
    NotRegistered,
    /// Stored bytes failed their integrity check.
    IntegrityFailure,
    /// No response within the retry budget (link down).
    TimedOut,
}

impl std::fmt::Display for RequestStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RequestStatus::Served => "served",
            RequestStatus::Denied => "denied",
            RequestStatus::NotRegistered => "not-registered",
            RequestStatus::IntegrityFailure => "integrity-failure",
            RequestStatus::TimedOut => "timed-out",
        })
    }
}

/// One finished retrieval request.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestOutcome {
    pub request_id: u64,
    pub case: Case,
    /// Messages sent on this request's path (consensus votes and
    /// post-return broadcasts excluded).
    pub hops: u32,
    /// Submission to final response, simulated clock.
    pub latency: SimTime,
    /// Data came back within the request's deadline, intact.
    pub accepted: bool,
    /// Returned payload matches the stored record byte-for-byte.
    pub integrity: bool,
    pub status: RequestStatus,
}

/// One device's share of a placement decision.
#[derive(Debug, Clone, PartialEq)]
pub struct OffloadRow {
    pub hospital: String,
    pub device: String,
    pub round: usize,
    pub offloaded: bool,
    pub time_s: f64,
    pub energy_j: f64,
    pub memory_mb: f64,
}

/// Everything one scenario run produced.
#[derive(Debug, Clone)]
pub struct ScenarioResult {
    pub scenario_id: String,
    pub outcomes: Vec<RequestOutcome>,
    pub offload: Vec<OffloadRow>,
    pub records_stored: usize,
    /// Global chain dump at quiescence.
    pub global_dump: String,
}

impl ScenarioResult {
    pub fn total_hops(&self) -> u64 {
        self.outcomes.iter().map(|o| o.hops as u64).sum()
    }

    pub fn mean_latency_s(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        let sum: f64 = self.outcomes.iter().map(|o| o.latency.as_secs_f64()).sum();
        sum / self.outcomes.len() as f64
    }

    pub fn acceptance(&self) -> f64 {
        if self.outcomes.is_empty() {
            return 0.0;
        }
        self.outcomes.iter().filter(|o| o.accepted).count() as f64 / self.outcomes.len() as f64
    }

    /// Flatten into generic metric rows.
    pub fn metric_rows(&self) -> Vec<MetricsRow> {
        let mut rows = Vec::new();
        for o in &self.outcomes {
            let entity = format!("request-{}", o.request_id);
            rows.push(self.row(&entity, "latency", o.latency.as_secs_f64(), "s"));
            rows.push(self.row(&entity, "hops", o.hops as f64, "count"));
            rows.push(self.row(&entity, "accepted", o.accepted as u8 as f64, "bool"));
            rows.push(self.row(&entity, "integrity", o.integrity as u8 as f64, "bool"));
        }
        for d in &self.offload {
            let entity = format!("{}/{}", d.hospital, d.device);
            rows.push(self.row(&entity, "offloaded", d.offloaded as u8 as f64, "bool"));
            rows.push(self.row(&entity, "time", d.time_s, "s"));
            rows.push(self.row(&entity, "energy", d.energy_j, "J"));
            rows.push(self.row(&entity, "memory", d.memory_mb, "MB"));
        }
        rows
    }

    fn row(&self, entity: &str, metric: &str, value: f64, unit: &str) -> MetricsRow {
        MetricsRow {
            scenario: self.scenario_id.clone(),
            entity: entity.to_string(),
            metric: metric.to_string(),
            value,
            unit: unit.to_string(),
        }
    }
}

/// Generic labeled metric value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub entity: String,
    pub metric: String,
    pub value: f64,
    pub unit: String,
}

/// Render rows as CSV: fixed header, comma separators, LF endings.
pub fn metrics_csv(rows: &[MetricsRow]) -> String {
    let mut out = String::from("scenario,entity,metric,value,unit\n");
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            row.scenario, row.entity, row.metric, row.value, row.unit
        ));
    }
    out
}
