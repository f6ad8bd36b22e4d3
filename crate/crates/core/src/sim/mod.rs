//! Deterministic discrete-event simulation of the hospital network:
//! devices offload and store records, users retrieve them through the
//! authenticated sharing protocol, and every message crosses a modeled
//! link with propagation plus serialization delay.
//!
//! A single seeded RNG drives all randomness and events pop in
//! (fire_time, sequence) order, so a (config, seed, mode) triple fully
//! determines every hash, ledger line, hop count, and outcome row.
//!
//! Baseline network modes alter the message sequences only: a
//! hash-lookup round trip to a directory node before every store read,
//! authentication routed through one fixed authority, or retrieval
//! replaced by a remote cloud node.

pub mod analysis;
pub mod metrics;
pub mod time;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::{Assignment, LinkConfig, ScenarioConfig};
use crate::contract::{AuthOutcome, ContractState, RegistrationTx, RequestTx};
use crate::crypto::{
    content_hash, decrypt, encrypt, generate_keypair, Ciphertext, ContentHash, KeyPair,
};
use crate::ledger::{
    pbft, Batcher, Chain, InterMecPayload, LedgerError, LedgerTx, LocalLedger, PbftNode, Replica,
    SharingPayload, StoragePayload, TxKind,
};
use crate::offload::{solve_pso, EdgeProfile, Instance, PsoConfig, SolveError, TaskSpec};
use crate::store::{HealthRecord, StoreCluster, StoreError};

pub use metrics::{
    metrics_csv, Case, MetricsRow, OffloadRow, RequestOutcome, RequestStatus, ScenarioResult,
};
pub use time::SimTime;

/// Which sharing architecture the run models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkMode {
    /// Contract-indexed lookup with per-hospital authentication.
    Decentralized,
    /// Classic global hash-directory lookup before every store read.
    Dht,
    /// All authentications routed through one fixed node.
    CentralAuthority,
    /// Record retrieval served by a single remote high-latency node.
    CentralCloud,
}

impl NetworkMode {
    pub const ALL: [NetworkMode; 4] = [
        NetworkMode::Decentralized,
        NetworkMode::Dht,
        NetworkMode::CentralAuthority,
        NetworkMode::CentralCloud,
    ];
}

impl std::fmt::Display for NetworkMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            NetworkMode::Decentralized => "decentralized",
            NetworkMode::Dht => "dht",
            NetworkMode::CentralAuthority => "central-authority",
            NetworkMode::CentralCloud => "central-cloud",
        })
    }
}

impl std::str::FromStr for NetworkMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "decentralized" => Ok(NetworkMode::Decentralized),
            "dht" => Ok(NetworkMode::Dht),
            "central-authority" => Ok(NetworkMode::CentralAuthority),
            "central-cloud" => Ok(NetworkMode::CentralCloud),
            other => Err(format!(
                "unknown mode {other:?}; expected decentralized|dht|central-authority|central-cloud"
            )),
        }
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("unknown entity: {0}")]
    UnknownEntity(String),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("placement solver failed: {0}")]
    Solve(#[from] SolveError),
    #[error("storage transaction never committed")]
    NotCommitted,
}

/// One message observed on a link: who, what, how big.
#[derive(Debug, Clone, PartialEq)]
pub struct MessageRecord {
    pub at: SimTime,
    pub from: String,
    pub to: String,
    pub label: &'static str,
    pub bytes: usize,
}

const DENY_REPLY_BYTES: usize = 64;
const LOOKUP_MSG_BYTES: usize = 96;
const FETCH_REQ_BYTES: usize = 160;

#[derive(Debug)]
enum Event {
    RecordAtMec {
        hospital: usize,
        patient: usize,
        record: HealthRecord,
    },
    StartRequest {
        req: u64,
    },
    RequestAtMec {
        req: u64,
        ct: Ciphertext,
    },
    AuthorityReply {
        req: u64,
        ct: Ciphertext,
    },
    LookupDone {
        req: u64,
        remote: bool,
    },
    FetchContinue {
        req: u64,
    },
    FetchAtRemote {
        req: u64,
    },
    RelayAtHome {
        req: u64,
        payload: Result<Vec<u8>, RequestStatus>,
    },
    CloudReply {
        req: u64,
        payload: Option<Vec<u8>>,
    },
    AtUser {
        req: u64,
        payload: Option<Vec<u8>>,
        status: RequestStatus,
    },
    CommitBatch {
        txs: Vec<LedgerTx>,
    },
    BatchDeadline,
    TimeoutCheck {
        req: u64,
    },
}

struct Scheduled {
    at: SimTime,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.at == other.at && self.seq == other.seq
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

struct UserNode {
    id: String,
    keys: KeyPair,
}

struct DeviceNode {
    id: String,
}

struct Hospital {
    id: String,
    mec_keys: KeyPair,
    replica: Replica,
    local_ledger: LocalLedger,
    busy_until: SimTime,
    users: Vec<UserNode>,
    devices: Vec<DeviceNode>,
    patients: Vec<String>,
}

struct GlobalLedger {
    nodes: Vec<PbftNode>,
    batcher: Batcher,
    round_latency: SimTime,
}

struct PendingRequest {
    user: (usize, usize),
    patient_id: String,
    target_hospital: usize,
    deadline: SimTime,
    started: SimTime,
    case: Case,
    hops: u32,
    finished: bool,
    request_tx: Option<LedgerTx>,
}

/// The simulation world. Build once per (config, seed, mode) and drive
/// it with the run methods.
pub struct Simulation {
    cfg: ScenarioConfig,
    mode: NetworkMode,
    rng: ChaCha8Rng,
    clock: SimTime,
    seq: u64,
    queue: BinaryHeap<Reverse<Scheduled>>,
    hospitals: Vec<Hospital>,
    stores: StoreCluster,
    global: GlobalLedger,
    dht_busy: SimTime,
    authority_busy: SimTime,
    cloud_busy: SimTime,
    cloud_plain: BTreeMap<(String, String), Vec<u8>>,
    requests: BTreeMap<u64, PendingRequest>,
    next_request_id: u64,
    outcomes: Vec<RequestOutcome>,
    delivered: BTreeMap<u64, Vec<u8>>,
    expected: BTreeMap<(String, String), ContentHash>,
    offload_rows: Vec<OffloadRow>,
    records_stored: usize,
    message_log: Vec<MessageRecord>,
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig, seed: u64, mode: NetworkMode) -> Result<Self, SimError> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x73c5_9d1e_a0b4_42f7);
        let hospital_count = cfg.topology.hospitals;

        let mut hospitals = Vec::with_capacity(hospital_count);
        for h in 0..hospital_count {
            let id = format!("hospital-{h}");
            let mec_keys = generate_keypair(format!("sim-{seed}/mec-{h}").as_bytes());
            let users = (0..cfg.topology.users_per_hospital)
                .map(|u| UserNode {
                    id: format!("user-{h}-{u}"),
                    keys: generate_keypair(format!("sim-{seed}/user-{h}-{u}").as_bytes()),
                })
                .collect();
            let devices = (0..cfg.topology.devices_per_hospital)
                .map(|d| DeviceNode {
                    id: format!("device-{h}-{d}"),
                })
                .collect();
            let patients = (0..cfg.topology.patients_per_hospital)
                .map(|p| format!("patient-{h}-{p}"))
                .collect();
            hospitals.push(Hospital {
                local_ledger: LocalLedger::new(id.clone()),
                replica: Replica::new(ContractState::new(id.clone())),
                id,
                mec_keys,
                busy_until: SimTime::ZERO,
                users,
                devices,
                patients,
            });
        }

        // Initialization phase: every replica learns every edge server's key.
        let directory: Vec<(String, crate::crypto::PublicKey)> = hospitals
            .iter()
            .map(|h| (h.id.clone(), h.mec_keys.public()))
            .collect();
        for hospital in &mut hospitals {
            for (id, pk) in &directory {
                hospital.replica.state.register_mec(id.clone(), *pk);
            }
        }

        // Registration phase: users join their local chain before the
        // clock starts.
        for hospital in &mut hospitals {
            for u in 0..hospital.users.len() {
                let treg = RegistrationTx {
                    user_pk: hospital.users[u].keys.public(),
                    user_id: hospital.users[u].id.clone(),
                    timestamp: 0,
                };
                let bytes = treg.to_bytes();
                hospital
                    .replica
                    .state
                    .register_user(&bytes, &hospital.mec_keys)
                    .expect("fresh registration");
                let tx = LedgerTx::signed(TxKind::Registration, bytes, &hospital.users[u].keys, 0);
                hospital.local_ledger.submit(tx).expect("fresh signature");
            }
            hospital.local_ledger.seal();
        }

        let store_ids: Vec<String> = hospitals.iter().map(|h| h.id.clone()).collect();
        let store_id_refs: Vec<&str> = store_ids.iter().map(String::as_str).collect();
        let stores = StoreCluster::new(&store_id_refs, cfg.topology.replication);

        let mut nodes = pbft::make_cluster(
            cfg.consensus.nodes,
            cfg.consensus.fault_budget,
            &format!("sim-{seed}/consensus"),
        );
        for (node, hospital) in nodes.iter_mut().zip(&hospitals) {
            node.id = hospital.id.clone();
        }

        // Burn one draw so the stream position differs from raw seeding.
        rng.next_u64();

        Ok(Self {
            cfg: cfg.clone(),
            mode,
            rng,
            clock: SimTime::ZERO,
            seq: 0,
            queue: BinaryHeap::new(),
            hospitals,
            stores,
            global: GlobalLedger {
                nodes,
                batcher: Batcher::new(
                    cfg.consensus.batch_size,
                    SimTime::from_secs_f64(cfg.consensus.batch_timeout_s).as_nanos(),
                ),
                round_latency: SimTime::from_secs_f64(cfg.consensus.round_latency_s),
            },
            dht_busy: SimTime::ZERO,
            authority_busy: SimTime::ZERO,
            cloud_busy: SimTime::ZERO,
            cloud_plain: BTreeMap::new(),
            requests: BTreeMap::new(),
            next_request_id: 0,
            outcomes: Vec::new(),
            delivered: BTreeMap::new(),
            expected: BTreeMap::new(),
            offload_rows: Vec::new(),
            records_stored: 0,
            message_log: Vec::new(),
        })
    }

    // ---- inspection ----

    pub fn mode(&self) -> NetworkMode {
        self.mode
    }

    pub fn hospital_count(&self) -> usize {
        self.hospitals.len()
    }

    pub fn hospital_id(&self, h: usize) -> &str {
        &self.hospitals[h].id
    }

    pub fn patient_id(&self, h: usize, p: usize) -> &str {
        &self.hospitals[h].patients[p]
    }

    pub fn contract(&self, h: usize) -> &ContractState {
        &self.hospitals[h].replica.state
    }

    pub fn mec_public_key(&self, h: usize) -> crate::crypto::PublicKey {
        self.hospitals[h].mec_keys.public()
    }

    pub fn global_chain(&self, node: usize) -> &Chain {
        &self.global.nodes[node].chain
    }

    pub fn local_chain(&self, h: usize) -> &Chain {
        self.hospitals[h].local_ledger.chain()
    }

    pub fn outcomes(&self) -> &[RequestOutcome] {
        &self.outcomes
    }

    pub fn delivered_payload(&self, req: u64) -> Option<&[u8]> {
        self.delivered.get(&req).map(Vec::as_slice)
    }

    /// Remove and return a delivered payload; keeps bulk verification
    /// loops from holding every plaintext at once.
    pub fn take_delivered_payload(&mut self, req: u64) -> Option<Vec<u8>> {
        self.delivered.remove(&req)
    }

    pub fn message_log(&self) -> &[MessageRecord] {
        &self.message_log
    }

    pub fn offload_rows(&self) -> &[OffloadRow] {
        &self.offload_rows
    }

    pub fn records_stored(&self) -> usize {
        self.records_stored
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    /// Fault injection: flip one stored bit at a hospital's store node.
    pub fn flip_stored_bit(&mut self, hospital: usize, hash: &ContentHash, bit: usize) -> bool {
        self.stores.node_mut(hospital).flip_stored_bit(hash, bit)
    }

    /// The registered record hash for a patient, per the replica at `h`.
    pub fn registered_hash(&self, h: usize, pid: &str, hospital_id: &str) -> Option<ContentHash> {
        self.hospitals[h]
            .replica
            .state
            .lookup_hash(pid, hospital_id)
            .ok()
            .map(|e| e.record_hash)
    }

    // ---- scheduling primitives ----

    fn schedule(&mut self, at: SimTime, event: Event) {
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse(Scheduled { at, seq, event }));
    }

    fn link_latency(link: &LinkConfig, bytes: usize) -> SimTime {
        SimTime::from_secs_f64(link.propagation_s + bytes as f64 * 8.0 / link.bandwidth_bps)
    }

    fn link_is_down(&self, a: &str, b: &str) -> bool {
        self.cfg
            .topology
            .links_down
            .iter()
            .any(|(x, y)| (x == a && y == b) || (x == b && y == a))
    }

    /// Record and schedule one message; returns false if the link is down.
    #[allow(clippy::too_many_arguments)]
    fn send(
        &mut self,
        from: String,
        to: String,
        label: &'static str,
        bytes: usize,
        link: LinkConfig,
        now: SimTime,
        event: Event,
    ) -> bool {
        if self.link_is_down(&from, &to) {
            return false;
        }
        let at = now + Self::link_latency(&link, bytes);
        self.message_log.push(MessageRecord {
            at,
            from,
            to,
            label,
            bytes,
        });
        self.schedule(at, event);
        true
    }

    /// FIFO single-server point: when queuing is on, the reply leaves
    /// after the queued service completes; otherwise instantly.
    fn service_point(
        busy_until: &mut SimTime,
        arrival: SimTime,
        fifo: bool,
        service: SimTime,
    ) -> SimTime {
        if !fifo {
            return arrival;
        }
        let start = (*busy_until).max(arrival);
        *busy_until = start + service;
        *busy_until
    }

    fn mec_service(&mut self, hospital: usize, arrival: SimTime) -> SimTime {
        let fifo = self.cfg.topology.fifo_queue;
        let service = SimTime::from_secs_f64(self.cfg.topology.mec_service_s);
        Self::service_point(
            &mut self.hospitals[hospital].busy_until,
            arrival,
            fifo,
            service,
        )
    }

    // ---- the event loop ----

    /// Drain the queue; the clock follows event fire times.
    pub fn run_to_quiescence(&mut self) {
        while let Some(Reverse(next)) = self.queue.pop() {
            debug_assert!(next.at >= self.clock, "time must not run backwards");
            self.clock = next.at;
            self.dispatch(next.event);
        }
    }

    fn dispatch(&mut self, event: Event) {
        let now = self.clock;
        match event {
            Event::RecordAtMec {
                hospital,
                patient,
                record,
            } => self.handle_record_at_mec(hospital, patient, record, now),
            Event::StartRequest { req } => self.handle_start_request(req, now),
            Event::RequestAtMec { req, ct } => self.handle_request_at_mec(req, ct, now),
            Event::AuthorityReply { req, ct } => self.handle_auth_done(req, ct, now),
            Event::LookupDone { req, remote } => {
                if remote {
                    self.serve_remote(req, now);
                } else {
                    self.serve_home(req, now);
                }
            }
            Event::FetchContinue { req } => self.handle_fetch_continue(req, now),
            Event::FetchAtRemote { req } => self.handle_fetch_at_remote(req, now),
            Event::RelayAtHome { req, payload } => self.handle_relay_at_home(req, payload, now),
            Event::CloudReply { req, payload } => self.handle_cloud_reply(req, payload, now),
            Event::AtUser {
                req,
                payload,
                status,
            } => self.finalize(req, payload, status, now),
            Event::CommitBatch { txs } => self.commit_batch(txs),
            Event::BatchDeadline => {
                if let Some(batch) = self.global.batcher.flush_due(now.as_nanos()) {
                    let at = now + self.global.round_latency;
                    self.schedule(at, Event::CommitBatch { txs: batch });
                }
            }
            Event::TimeoutCheck { req } => self.handle_timeout(req, now),
        }
    }

    // ---- global ledger ----

    fn submit_global(&mut self, tx: LedgerTx, now: SimTime) {
        debug_assert!(tx.verify_signature());
        let was_empty = self.global.batcher.pending_len() == 0;
        if let Some(batch) = self.global.batcher.push(now.as_nanos(), tx) {
            let at = now + self.global.round_latency;
            self.schedule(at, Event::CommitBatch { txs: batch });
        } else if was_empty {
            if let Some(deadline) = self.global.batcher.next_deadline() {
                self.schedule(SimTime(deadline), Event::BatchDeadline);
            }
        }
    }

    fn commit_batch(&mut self, txs: Vec<LedgerTx>) {
        match pbft::pbft_round(&mut self.global.nodes, txs) {
            Ok((block, _stats)) => {
                for hospital in &mut self.hospitals {
                    hospital
                        .replica
                        .apply_committed(&block)
                        .expect("replicas apply blocks in commit order");
                }
            }
            Err(e) => {
                // All simulated consensus nodes are honest, so this
                // only fires on misconfiguration.
                log::warn!("consensus round failed: {e}");
            }
        }
    }

    // ---- storage pipeline ----

    /// Solve the placement problem for one storage round of a hospital
    /// and schedule each device's record arrival at the edge server.
    fn schedule_storage_round(
        &mut self,
        hospital: usize,
        round: usize,
        pairs: &[(usize, usize)], // (device, patient)
        start: SimTime,
    ) -> Result<(), SimError> {
        let task_cfg = self.cfg.task.clone();
        let mut tasks = Vec::with_capacity(pairs.len());
        let mut devices = Vec::with_capacity(pairs.len());
        let mut records = Vec::with_capacity(pairs.len());

        for (_, patient) in pairs {
            let size = self.rng.gen_range(
                self.cfg.workload.record_size_bytes.0..=self.cfg.workload.record_size_bytes.1,
            );
            let mut raw = vec![0u8; size];
            self.rng.fill_bytes(&mut raw);
            let gcycles = self
                .rng
                .gen_range(task_cfg.local_gcycles.0..=task_cfg.local_gcycles.1);
            let bits = size as f64 * 8.0;
            let task = TaskSpec {
                data_size_bits: bits,
                local_cycles_per_bit: gcycles * 1e9 / bits,
                enc_cycles_per_bit: task_cfg.enc_cycles_per_bit,
                edge_cycles_per_bit: gcycles * task_cfg.edge_cycle_factor * 1e9 / bits,
                max_latency_s: task_cfg.max_latency_s,
            };
            let size_kb = size as f64 / 1000.0;
            let device = crate::offload::DeviceProfile {
                local_cpu_hz: task_cfg.local_cpu_hz,
                tx_rate_bps: task_cfg.tx_rate_bps,
                min_rate_bps: task.data_size_bits / task.max_latency_s,
                tx_power_w: task_cfg.tx_power_w,
                max_tx_power_w: task_cfg.max_tx_power_w,
                local_energy_j: task_cfg.local_energy_j_per_gcycle * gcycles,
                enc_energy_j: task_cfg.enc_energy_j,
                local_mem_mb: task_cfg.local_mem_base_mb + task_cfg.local_mem_per_kb * size_kb,
                offload_mem_mb: task_cfg.offload_mem_base_mb
                    + task_cfg.offload_mem_per_kb * size_kb,
                mem_cap_mb: task_cfg.mem_cap_mb,
            };
            tasks.push(task);
            devices.push(device);
            records.push((*patient, raw));
        }

        let instance = Instance {
            tasks,
            devices,
            edge: EdgeProfile {
                budget_hz: task_cfg.edge_budget_hz,
                allocation: task_cfg.allocation,
                access_delay_s: 0.0,
            },
            weights: self.cfg.cost_weights(),
        };
        let pso_cfg =
            PsoConfig::default().with_seed(self.cfg.seed ^ ((hospital as u64) << 32) ^ round as u64);
        let decision = match solve_pso(&instance, &pso_cfg) {
            Ok(result) => result.decision,
            // An infeasible round still executes; keep the best found.
            Err(SolveError::NoFeasibleSolution { best }) => best.decision,
            Err(e) => return Err(e.into()),
        };

        for (i, ((device_idx, patient), (_, raw))) in
            pairs.iter().zip(records.into_iter()).enumerate()
        {
            let cost = &decision.devices[i];
            self.offload_rows.push(OffloadRow {
                hospital: self.hospitals[hospital].id.clone(),
                device: self.hospitals[hospital].devices[*device_idx].id.clone(),
                round,
                offloaded: cost.offloaded,
                time_s: cost.time_s,
                energy_j: cost.energy_j,
                memory_mb: cost.memory_mb,
            });

            // Offloaded tasks already shipped their data inside the
            // realized time; local execution uploads the finished
            // record afterward.
            let analyzed = analysis::analyze(&raw);
            let record = HealthRecord {
                patient_id: self.hospitals[hospital].patients[*patient].clone(),
                raw_data: raw,
                analyzed_result: analyzed,
            };
            let mut arrival = start + SimTime::from_secs_f64(cost.time_s);
            if !cost.offloaded {
                arrival = arrival
                    + Self::link_latency(&self.cfg.topology.device_link, record.to_bytes().len());
            }
            self.schedule(
                arrival,
                Event::RecordAtMec {
                    hospital,
                    patient: *patient,
                    record,
                },
            );
        }
        Ok(())
    }

    fn handle_record_at_mec(
        &mut self,
        hospital: usize,
        _patient: usize,
        record: HealthRecord,
        now: SimTime,
    ) {
        let plain = record.to_bytes();
        let pid = record.patient_id.clone();
        let hospital_id = self.hospitals[hospital].id.clone();
        let mec_pk = self.hospitals[hospital].mec_keys.public();

        let ct = encrypt(&plain, &mec_pk, &mut self.rng);
        let hash = self.stores.put(hospital, &ct, now.as_nanos());
        self.expected
            .insert((pid.clone(), hospital_id.clone()), content_hash(&plain, 0));

        if self.mode == NetworkMode::CentralCloud {
            self.cloud_plain.insert((pid.clone(), hospital_id), plain);
        }

        let payload = StoragePayload {
            record_hash: hash,
            patient_id: pid,
            owner_pk: mec_pk,
            timestamp: now.as_nanos(),
        };
        let tx = LedgerTx::signed(
            TxKind::Storage,
            payload.to_bytes(),
            &self.hospitals[hospital].mec_keys,
            now.as_nanos(),
        );
        self.submit_global(tx, now);
        self.records_stored += 1;
    }

    /// Run the full storage phase: every patient's record is collected,
    /// executed per the placement decision, encrypted, stored, and
    /// committed. Returns at quiescence.
    pub fn run_storage_phase(&mut self) -> Result<(), SimError> {
        let devices = self.cfg.topology.devices_per_hospital;
        let patients = self.cfg.topology.patients_per_hospital;
        let rounds = patients.div_ceil(devices);
        let round_gap = SimTime::from_secs_f64(self.cfg.task.max_latency_s * 2.0);

        for hospital in 0..self.hospitals.len() {
            for round in 0..rounds {
                let pairs: Vec<(usize, usize)> = (0..devices)
                    .filter_map(|d| {
                        let p = round * devices + d;
                        (p < patients).then_some((d, p))
                    })
                    .collect();
                if pairs.is_empty() {
                    continue;
                }
                let start = self.clock + SimTime(round_gap.as_nanos() * round as u64);
                self.schedule_storage_round(hospital, round, &pairs, start)?;
            }
        }
        self.run_to_quiescence();
        Ok(())
    }

    /// Store a single record end to end and return its content hash and
    /// the committed storage transaction.
    pub fn store_record(
        &mut self,
        hospital: usize,
        device: usize,
        patient: usize,
        raw: Vec<u8>,
    ) -> Result<(ContentHash, LedgerTx), SimError> {
        if hospital >= self.hospitals.len() {
            return Err(SimError::UnknownEntity(format!("hospital-{hospital}")));
        }
        if device >= self.hospitals[hospital].devices.len()
            || patient >= self.hospitals[hospital].patients.len()
        {
            return Err(SimError::UnknownEntity("device or patient index".into()));
        }
        // Single-record round: pin the size range so the scheduled task
        // profile matches the payload, then swap the payload in.
        let saved = self.cfg.workload.record_size_bytes;
        self.cfg.workload.record_size_bytes = (raw.len().max(1), raw.len().max(1));
        let result = self.schedule_storage_round(hospital, 0, &[(device, patient)], self.clock);
        self.cfg.workload.record_size_bytes = saved;
        result?;

        let replaced = self.replace_pending_record(hospital, patient, raw);
        debug_assert!(replaced);
        self.run_to_quiescence();

        let pid = self.hospitals[hospital].patients[patient].clone();
        let hospital_id = self.hospitals[hospital].id.clone();
        let entry = self.hospitals[hospital]
            .replica
            .state
            .lookup_hash(&pid, &hospital_id)
            .map_err(|_| SimError::NotCommitted)?;
        let hash = entry.record_hash;
        let tx = self
            .find_global_tx(|tx| {
                tx.kind == TxKind::Storage
                    && StoragePayload::from_bytes(&tx.payload)
                        .map(|p| p.record_hash == hash)
                        .unwrap_or(false)
            })
            .ok_or(SimError::NotCommitted)?;
        Ok((hash, tx))
    }

    fn replace_pending_record(&mut self, hospital: usize, patient: usize, raw: Vec<u8>) -> bool {
        let mut drained: Vec<Scheduled> = Vec::new();
        let mut replaced = false;
        while let Some(Reverse(item)) = self.queue.pop() {
            drained.push(item);
        }
        for item in &mut drained {
            if let Event::RecordAtMec {
                hospital: h,
                patient: p,
                record,
            } = &mut item.event
            {
                if *h == hospital && *p == patient && !replaced {
                    record.analyzed_result = analysis::analyze(&raw);
                    record.raw_data = raw.clone();
                    replaced = true;
                }
            }
        }
        for item in drained {
            self.queue.push(Reverse(item));
        }
        replaced
    }

    fn find_global_tx(&self, pred: impl Fn(&LedgerTx) -> bool) -> Option<LedgerTx> {
        for block in self.global.nodes[0].chain.blocks() {
            for tx in &block.transactions {
                if pred(tx) {
                    return Some(tx.clone());
                }
            }
        }
        None
    }

    // ---- request pipeline ----

    /// Schedule a retrieval request; returns its id. Drive the loop to
    /// quiescence to observe the outcome.
    pub fn submit_request(
        &mut self,
        user: (usize, usize),
        patient_id: &str,
        target_hospital: usize,
        deadline: SimTime,
        start: SimTime,
    ) -> u64 {
        let req = self.next_request_id;
        self.next_request_id += 1;
        let case = if user.0 == target_hospital {
            Case::Local
        } else {
            Case::Remote
        };
        self.requests.insert(
            req,
            PendingRequest {
                user,
                patient_id: patient_id.to_string(),
                target_hospital,
                deadline,
                started: start,
                case,
                hops: 0,
                finished: false,
                request_tx: None,
            },
        );
        self.schedule(start, Event::StartRequest { req });
        let timeout = start + SimTime::from_secs_f64(self.cfg.topology.retry_timeout_s);
        self.schedule(timeout, Event::TimeoutCheck { req });
        req
    }

    /// Convenience wrapper: submit one request now and run to quiescence.
    pub fn run_request(
        &mut self,
        user: (usize, usize),
        patient_id: &str,
        target_hospital: usize,
        deadline: SimTime,
    ) -> RequestOutcome {
        let start = self.clock;
        let req = self.submit_request(user, patient_id, target_hospital, deadline, start);
        self.run_to_quiescence();
        self.outcomes
            .iter()
            .find(|o| o.request_id == req)
            .cloned()
            .expect("request finalized at quiescence")
    }

    fn handle_start_request(&mut self, req: u64, now: SimTime) {
        let (home, user_idx, target_id, pid, deadline) = {
            let r = &self.requests[&req];
            (
                r.user.0,
                r.user.1,
                self.hospitals[r.target_hospital].id.clone(),
                r.patient_id.clone(),
                r.deadline,
            )
        };
        let user_keys = self.hospitals[home].users[user_idx].keys.clone();
        let user_id = self.hospitals[home].users[user_idx].id.clone();
        let mec_pk = self.hospitals[home].mec_keys.public();

        let request = RequestTx {
            user_pk: user_keys.public(),
            user_id,
            patient_id: pid,
            hospital_id: target_id,
            deadline_ns: deadline.as_nanos(),
            timestamp: now.as_nanos(),
        };
        let ct = encrypt(&request.to_bytes(), &mec_pk, &mut self.rng);
        let tx = LedgerTx::signed(TxKind::Request, ct.to_bytes(), &user_keys, now.as_nanos());
        if let Some(r) = self.requests.get_mut(&req) {
            r.request_tx = Some(tx);
        }
        let from = self.hospitals[home].users[user_idx].id.clone();
        let to = self.hospitals[home].id.clone();
        let bytes = ct.wire_len();
        let link = self.cfg.topology.device_link;
        self.bump_hops(req, 1);
        // If the access link is down the timeout event finalizes later.
        let _ = self.send(
            from,
            to,
            "request",
            bytes,
            link,
            now,
            Event::RequestAtMec { req, ct },
        );
    }

    fn handle_request_at_mec(&mut self, req: u64, ct: Ciphertext, now: SimTime) {
        let home = self.requests[&req].user.0;
        // Trace the encrypted request on the hospital's local chain.
        if let Some(tx) = self.requests.get_mut(&req).and_then(|r| r.request_tx.take()) {
            let ledger = &mut self.hospitals[home].local_ledger;
            ledger.submit(tx).expect("user-signed request");
            ledger.seal();
        }

        if self.mode == NetworkMode::CentralAuthority {
            // Verification round trip through the fixed authority node.
            let link = self.cfg.topology.mec_link;
            let from = self.hospitals[home].id.clone();
            let bytes = ct.wire_len();
            self.bump_hops(req, 2);
            let arrival = now + Self::link_latency(&link, bytes);
            self.message_log.push(MessageRecord {
                at: arrival,
                from: from.clone(),
                to: "authority".into(),
                label: "auth-check",
                bytes,
            });
            let fifo = self.cfg.topology.fifo_queue;
            let service = SimTime::from_secs_f64(self.cfg.topology.mec_service_s);
            let served = Self::service_point(&mut self.authority_busy, arrival, fifo, service);
            let back = served + Self::link_latency(&link, DENY_REPLY_BYTES);
            self.message_log.push(MessageRecord {
                at: back,
                from: "authority".into(),
                to: from,
                label: "auth-reply",
                bytes: DENY_REPLY_BYTES,
            });
            self.schedule(back, Event::AuthorityReply { req, ct });
            return;
        }

        let ready = self.mec_service(home, now);
        self.handle_auth_done(req, ct, ready);
    }

    fn handle_auth_done(&mut self, req: u64, ct: Ciphertext, now: SimTime) {
        let home = self.requests[&req].user.0;
        let outcome = {
            let hospital = &mut self.hospitals[home];
            let host_id = hospital.id.clone();
            hospital
                .replica
                .state
                .authenticate(&ct, &hospital.mec_keys, &host_id, now.as_nanos())
        };

        let request = match outcome {
            AuthOutcome::Denied { .. } => {
                self.reply_to_user(req, None, RequestStatus::Denied, home, now);
                return;
            }
            AuthOutcome::Granted { request, .. } => request,
        };

        // Resolve the record location from the replica's registry.
        let lookup = self.hospitals[home]
            .replica
            .state
            .lookup_hash(&request.patient_id, &request.hospital_id)
            .is_ok();
        if !lookup {
            self.reply_to_user(req, None, RequestStatus::NotRegistered, home, now);
            return;
        }

        if self.mode == NetworkMode::CentralCloud {
            self.fetch_from_cloud(req, now);
            return;
        }

        let is_remote = self.requests[&req].case == Case::Remote;
        if is_remote {
            // The fetch request is a global transaction; the requester
            // waits out the consensus decision before it leaves.
            let payload = InterMecPayload {
                patient_id: request.patient_id.clone(),
                user_pk: request.user_pk,
                requester_pk: self.hospitals[home].mec_keys.public(),
                timestamp: now.as_nanos(),
            };
            let tx = LedgerTx::signed(
                TxKind::InterMecRequest,
                payload.to_bytes(),
                &self.hospitals[home].mec_keys,
                now.as_nanos(),
            );
            self.submit_global(tx, now);
            let at = now + self.global.round_latency;
            self.schedule(at, Event::FetchContinue { req });
        } else if self.mode == NetworkMode::Dht {
            self.dht_lookup(req, home, false, now);
        } else {
            self.serve_home(req, now);
        }
    }

    /// Directory round trip before a store read (classic global-index
    /// lookup): two extra hops to the dedicated directory node.
    fn dht_lookup(&mut self, req: u64, at_hospital: usize, remote: bool, now: SimTime) {
        let link = self.cfg.topology.mec_link;
        let from = self.hospitals[at_hospital].id.clone();
        self.bump_hops(req, 2);
        let arrive = now + Self::link_latency(&link, LOOKUP_MSG_BYTES);
        self.message_log.push(MessageRecord {
            at: arrive,
            from: from.clone(),
            to: "directory".into(),
            label: "hash-lookup",
            bytes: LOOKUP_MSG_BYTES,
        });
        let fifo = self.cfg.topology.fifo_queue;
        let service = SimTime::from_secs_f64(self.cfg.topology.mec_service_s);
        let served = Self::service_point(&mut self.dht_busy, arrive, fifo, service);
        let back = served + Self::link_latency(&link, LOOKUP_MSG_BYTES);
        self.message_log.push(MessageRecord {
            at: back,
            from: "directory".into(),
            to: from,
            label: "hash-location",
            bytes: LOOKUP_MSG_BYTES,
        });
        self.schedule(back, Event::LookupDone { req, remote });
    }

    /// Serve a same-hospital request from the home store.
    fn serve_home(&mut self, req: u64, now: SimTime) {
        let home = self.requests[&req].user.0;
        let (payload, status) = self.read_and_decrypt(home, req);
        match payload {
            Some(plain) => {
                // Sharing broadcast goes out after the data is on its way.
                self.broadcast_sharing(home, req, now);
                self.reply_to_user(req, Some(plain), status, home, now);
            }
            None => self.reply_to_user(req, None, status, home, now),
        }
    }

    fn handle_fetch_continue(&mut self, req: u64, now: SimTime) {
        let (home, target) = {
            let r = &self.requests[&req];
            (r.user.0, r.target_hospital)
        };
        let from = self.hospitals[home].id.clone();
        let to = self.hospitals[target].id.clone();
        let link = self.cfg.topology.mec_link;
        self.bump_hops(req, 1);
        // Inter-hospital link down leaves the timeout to finalize.
        let _ = self.send(
            from,
            to,
            "fetch",
            FETCH_REQ_BYTES,
            link,
            now,
            Event::FetchAtRemote { req },
        );
    }

    fn handle_fetch_at_remote(&mut self, req: u64, now: SimTime) {
        let target = self.requests[&req].target_hospital;
        let ready = self.mec_service(target, now);
        if self.mode == NetworkMode::Dht {
            self.dht_lookup(req, target, true, ready);
        } else {
            self.serve_remote(req, ready);
        }
    }

    /// Serve a cross-hospital request at the owning hospital and relay
    /// the plaintext back to the requester's edge server.
    fn serve_remote(&mut self, req: u64, now: SimTime) {
        let (home, target) = {
            let r = &self.requests[&req];
            (r.user.0, r.target_hospital)
        };
        let (payload, status) = self.read_and_decrypt(target, req);
        let result = match payload {
            Some(plain) => {
                self.broadcast_sharing(target, req, now);
                Ok(plain)
            }
            None => Err(status),
        };
        let bytes = result.as_ref().map(Vec::len).unwrap_or(DENY_REPLY_BYTES);
        let from = self.hospitals[target].id.clone();
        let to = self.hospitals[home].id.clone();
        let link = self.cfg.topology.mec_link;
        self.bump_hops(req, 1);
        let _ = self.send(
            from,
            to,
            "relay",
            bytes,
            link,
            now,
            Event::RelayAtHome {
                req,
                payload: result,
            },
        );
    }

    fn handle_relay_at_home(
        &mut self,
        req: u64,
        payload: Result<Vec<u8>, RequestStatus>,
        now: SimTime,
    ) {
        let home = self.requests[&req].user.0;
        match payload {
            Ok(plain) => self.reply_to_user(req, Some(plain), RequestStatus::Served, home, now),
            Err(status) => self.reply_to_user(req, None, status, home, now),
        }
    }

    fn fetch_from_cloud(&mut self, req: u64, now: SimTime) {
        let home = self.requests[&req].user.0;
        let link = self.cfg.topology.cloud_link;
        let from = self.hospitals[home].id.clone();
        self.bump_hops(req, 1);
        let arrive = now + Self::link_latency(&link, FETCH_REQ_BYTES);
        self.message_log.push(MessageRecord {
            at: arrive,
            from,
            to: "cloud".into(),
            label: "cloud-fetch",
            bytes: FETCH_REQ_BYTES,
        });
        let fifo = self.cfg.topology.fifo_queue;
        let service = SimTime::from_secs_f64(self.cfg.topology.mec_service_s);
        let served = Self::service_point(&mut self.cloud_busy, arrive, fifo, service);

        let key = {
            let r = &self.requests[&req];
            (
                r.patient_id.clone(),
                self.hospitals[r.target_hospital].id.clone(),
            )
        };
        let payload = self.cloud_plain.get(&key).cloned();
        let bytes = payload.as_ref().map(Vec::len).unwrap_or(DENY_REPLY_BYTES);
        self.bump_hops(req, 1);
        let back = served + Self::link_latency(&link, bytes);
        self.message_log.push(MessageRecord {
            at: back,
            from: "cloud".into(),
            to: self.hospitals[home].id.clone(),
            label: "cloud-reply",
            bytes,
        });
        self.schedule(back, Event::CloudReply { req, payload });
    }

    fn handle_cloud_reply(&mut self, req: u64, payload: Option<Vec<u8>>, now: SimTime) {
        let home = self.requests[&req].user.0;
        match payload {
            Some(plain) => {
                self.broadcast_sharing(home, req, now);
                self.reply_to_user(req, Some(plain), RequestStatus::Served, home, now)
            }
            None => self.reply_to_user(req, None, RequestStatus::NotRegistered, home, now),
        }
    }

    /// Read the patient's ciphertext from `hospital`'s store node and
    /// decrypt it with that server's key.
    fn read_and_decrypt(&mut self, hospital: usize, req: u64) -> (Option<Vec<u8>>, RequestStatus) {
        let (pid, target_id) = {
            let r = &self.requests[&req];
            (
                r.patient_id.clone(),
                self.hospitals[r.target_hospital].id.clone(),
            )
        };
        let entry = match self.hospitals[hospital]
            .replica
            .state
            .lookup_hash(&pid, &target_id)
        {
            Ok(e) => e.clone(),
            Err(_) => return (None, RequestStatus::NotRegistered),
        };
        match self.stores.node(hospital).get_local(&entry.record_hash) {
            Ok(ct) => match decrypt(&ct, &self.hospitals[hospital].mec_keys) {
                Ok(plain) => (Some(plain), RequestStatus::Served),
                Err(_) => (None, RequestStatus::IntegrityFailure),
            },
            Err(StoreError::Integrity { .. }) => (None, RequestStatus::IntegrityFailure),
            Err(_) => (None, RequestStatus::NotRegistered),
        }
    }

    /// Broadcast the completed sharing event on the global chain; never
    /// delays the requester.
    fn broadcast_sharing(&mut self, serving_hospital: usize, req: u64, now: SimTime) {
        let (pid, target_id, user_pk) = {
            let r = &self.requests[&req];
            let user = &self.hospitals[r.user.0].users[r.user.1];
            (
                r.patient_id.clone(),
                self.hospitals[r.target_hospital].id.clone(),
                user.keys.public(),
            )
        };
        let record_hash = self.hospitals[serving_hospital]
            .replica
            .state
            .lookup_hash(&pid, &target_id)
            .map(|e| e.record_hash)
            .unwrap_or(ContentHash([0; 32]));
        let payload = SharingPayload {
            user_pk,
            record_hash,
            owner_pk: self.hospitals[serving_hospital].mec_keys.public(),
            timestamp: now.as_nanos(),
        };
        let tx = LedgerTx::signed(
            TxKind::Sharing,
            payload.to_bytes(),
            &self.hospitals[serving_hospital].mec_keys,
            now.as_nanos(),
        );
        self.submit_global(tx, now);
    }

    fn reply_to_user(
        &mut self,
        req: u64,
        payload: Option<Vec<u8>>,
        status: RequestStatus,
        from_hospital: usize,
        now: SimTime,
    ) {
        let (home, user_idx) = self.requests[&req].user;
        let bytes = payload.as_ref().map(Vec::len).unwrap_or(DENY_REPLY_BYTES);
        let from = self.hospitals[from_hospital].id.clone();
        let to = self.hospitals[home].users[user_idx].id.clone();
        let link = self.cfg.topology.device_link;
        self.bump_hops(req, 1);
        let _ = self.send(
            from,
            to,
            "response",
            bytes,
            link,
            now,
            Event::AtUser {
                req,
                payload,
                status,
            },
        );
    }

    fn bump_hops(&mut self, req: u64, by: u32) {
        if let Some(r) = self.requests.get_mut(&req) {
            r.hops += by;
        }
    }

    fn finalize(
        &mut self,
        req: u64,
        payload: Option<Vec<u8>>,
        status: RequestStatus,
        now: SimTime,
    ) {
        let key = {
            let Some(r) = self.requests.get(&req) else {
                return;
            };
            if r.finished {
                return;
            }
            (
                r.patient_id.clone(),
                self.hospitals[r.target_hospital].id.clone(),
            )
        };
        let integrity = match (&payload, self.expected.get(&key)) {
            (Some(plain), Some(expected)) => content_hash(plain, 0) == *expected,
            _ => false,
        };
        let r = self.requests.get_mut(&req).expect("checked above");
        r.finished = true;
        let latency = now.saturating_sub(r.started);
        let accepted = status == RequestStatus::Served && integrity && latency <= r.deadline;
        self.outcomes.push(RequestOutcome {
            request_id: req,
            case: r.case,
            hops: r.hops,
            latency,
            accepted,
            integrity,
            status,
        });
        if let Some(plain) = payload {
            self.delivered.insert(req, plain);
        }
    }

    fn handle_timeout(&mut self, req: u64, now: SimTime) {
        let unfinished = self
            .requests
            .get(&req)
            .map(|r| !r.finished)
            .unwrap_or(false);
        if unfinished {
            self.finalize(req, None, RequestStatus::TimedOut, now);
        }
    }
}

/// Build the per-request (user, target hospital, patient) plan.
fn plan_requests(
    cfg: &ScenarioConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<((usize, usize), usize, usize)> {
    let hospitals = cfg.topology.hospitals;
    let users = cfg.topology.users_per_hospital;
    let patients = cfg.topology.patients_per_hospital;
    let n = cfg.workload.requests;
    let mut plan = Vec::with_capacity(n);
    let mut remote_acc = 0.0f64;
    for i in 0..n {
        // Spread the remote fraction evenly over the sequence.
        remote_acc += cfg.workload.remote_fraction;
        let remote = remote_acc >= 1.0 - 1e-12;
        if remote {
            remote_acc -= 1.0;
        }
        let entry = match cfg.workload.assignment {
            Assignment::Balanced => {
                let h = i % hospitals;
                let u = (i / hospitals) % users;
                let target = if remote { (h + 1) % hospitals } else { h };
                let p = (i / hospitals) % patients;
                ((h, u), target, p)
            }
            Assignment::Random => {
                let h = rng.gen_range(0..hospitals);
                let u = rng.gen_range(0..users);
                let target = if remote && hospitals > 1 {
                    let mut t = rng.gen_range(0..hospitals - 1);
                    if t >= h {
                        t += 1;
                    }
                    t
                } else {
                    h
                };
                let p = rng.gen_range(0..patients);
                ((h, u), target, p)
            }
        };
        plan.push(entry);
    }
    plan
}

fn run_with_mode(
    cfg: &ScenarioConfig,
    seed: u64,
    mode: NetworkMode,
) -> Result<ScenarioResult, SimError> {
    let mut sim = Simulation::new(cfg, seed, mode)?;
    sim.run_storage_phase()?;

    let mut plan_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let plan = plan_requests(cfg, &mut plan_rng);
    let base = sim.now() + SimTime::from_secs_f64(1.0);
    let stagger = SimTime::from_secs_f64(cfg.workload.stagger_s);
    let deadline = SimTime::from_secs_f64(cfg.workload.deadline_s);
    for (i, (user, target, patient)) in plan.iter().enumerate() {
        let pid = sim.patient_id(*target, *patient).to_string();
        let start = base + SimTime(stagger.as_nanos() * i as u64);
        sim.submit_request(*user, &pid, *target, deadline, start);
    }
    sim.run_to_quiescence();

    let mut outcomes = sim.outcomes().to_vec();
    outcomes.sort_by_key(|o| o.request_id);
    Ok(ScenarioResult {
        scenario_id: format!("{mode}/seed-{seed}/requests-{}", cfg.workload.requests),
        outcomes,
        offload: sim.offload_rows().to_vec(),
        records_stored: sim.records_stored(),
        global_dump: sim.global_chain(0).dump(),
    })
}

/// Execute the configured workload under the contract-indexed scheme.
pub fn run_scenario(cfg: &ScenarioConfig, seed: u64) -> Result<ScenarioResult, SimError> {
    run_with_mode(cfg, seed, NetworkMode::Decentralized)
}

/// Execute the same workload under a baseline architecture.
pub fn run_baseline(
    cfg: &ScenarioConfig,
    seed: u64,
    mode: NetworkMode,
) -> Result<ScenarioResult, SimError> {
    run_with_mode(cfg, seed, mode)
}
