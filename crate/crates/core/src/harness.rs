//! Batch experiment drivers behind the command-line interface: the
//! placement cost sweep, the sharing benchmark across network modes,
//! and the self-check suite. All output is deterministic for a fixed
//! (config, seed) pair, so CSV results are golden-file stable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::ScenarioConfig;
use crate::crypto::{decrypt, encrypt, generate_keypair};
use crate::exec;
use crate::ledger::{pbft, LedgerTx, NodeBehavior, SharingPayload, TxKind};
use crate::offload::{
    evaluate, solve_exhaustive, solve_pso, CostWeights, DeviceProfile,
    EdgeProfile, Instance, PsoConfig, SolveError, TaskSpec,
};
use crate::sim::{run_baseline, NetworkMode, SimError, SimTime, Simulation};

/// Where a sweep row's tasks execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Every task runs on its device.
    LocalOnly,
    /// Placement optimized against a remote-cloud profile: extra WAN
    /// delay, smaller granted compute.
    Cloud,
    /// Placement optimized against the co-located edge server.
    Edge,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::LocalOnly => "local-only",
            Scheme::Cloud => "cloud",
            Scheme::Edge => "edge",
        })
    }
}

/// One (weights, file size, scheme) sweep result, totals over devices.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub weights: CostWeights,
    pub size_kb: u64,
    pub scheme: Scheme,
    pub time_s: f64,
    pub energy_j: f64,
    pub memory_mb: f64,
    pub total_cost: f64,
    pub offloaded: usize,
}

/// Build the shared problem instance for one sweep cell. The task mix
/// depends only on (seed, size), so schemes and weight sets compare
/// like against like.
fn sweep_instance(cfg: &ScenarioConfig, seed: u64, size_kb: u64, scheme: Scheme) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ size_kb.wrapping_mul(0x9e37_79b9));
    let task_cfg = &cfg.task;
    let n = cfg.topology.devices_per_hospital;
    let bits = size_kb as f64 * 1000.0 * 8.0;
    let mut tasks = Vec::with_capacity(n);
    let mut devices = Vec::with_capacity(n);
    for _ in 0..n {
        let gcycles = rng.gen_range(task_cfg.local_gcycles.0..=task_cfg.local_gcycles.1);
        tasks.push(TaskSpec {
            data_size_bits: bits,
            local_cycles_per_bit: gcycles * 1e9 / bits,
            enc_cycles_per_bit: task_cfg.enc_cycles_per_bit,
            edge_cycles_per_bit: gcycles * task_cfg.edge_cycle_factor * 1e9 / bits,
            max_latency_s: task_cfg.max_latency_s,
        });
        devices.push(DeviceProfile {
            local_cpu_hz: task_cfg.local_cpu_hz,
            tx_rate_bps: task_cfg.tx_rate_bps,
            min_rate_bps: bits / task_cfg.max_latency_s,
            tx_power_w: task_cfg.tx_power_w,
            max_tx_power_w: task_cfg.max_tx_power_w,
            local_energy_j: task_cfg.local_energy_j_per_gcycle * gcycles,
            enc_energy_j: task_cfg.enc_energy_j,
            local_mem_mb: task_cfg.local_mem_base_mb + task_cfg.local_mem_per_kb * size_kb as f64,
            offload_mem_mb: task_cfg.offload_mem_base_mb
                + task_cfg.offload_mem_per_kb * size_kb as f64,
            mem_cap_mb: task_cfg.mem_cap_mb,
        });
    }
    let edge = match scheme {
        Scheme::Cloud => EdgeProfile {
            budget_hz: task_cfg.cloud_budget_hz,
            allocation: task_cfg.allocation,
            access_delay_s: task_cfg.cloud_wan_delay_s,
        },
        _ => EdgeProfile {
            budget_hz: task_cfg.edge_budget_hz,
            allocation: task_cfg.allocation,
            access_delay_s: 0.0,
        },
    };
    Instance {
        tasks,
        devices,
        edge,
        weights: CostWeights::equal(),
    }
}

/// Placement cost sweep: each configured file size under each scheme
/// and weight set.
pub fn offload_sweep(
    cfg: &ScenarioConfig,
    weight_sets: &[CostWeights],
    seed: u64,
) -> Result<Vec<SweepRow>, SimError> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for weights in weight_sets {
        for &size_kb in &cfg.workload.sweep_sizes_kb {
            for scheme in [Scheme::LocalOnly, Scheme::Cloud, Scheme::Edge] {
                cells.push((*weights, size_kb, scheme));
            }
        }
    }
    let rows: Vec<Result<SweepRow, SolveError>> =
        exec::ordered_map(&cells, |(weights, size_kb, scheme)| {
            let mut instance = sweep_instance(cfg, seed, *size_kb, *scheme);
            instance.weights = *weights;
            let decision = match scheme {
                Scheme::LocalOnly => {
                    let x = vec![false; instance.len()];
                    evaluate(
                        &instance.tasks,
                        &instance.devices,
                        &instance.edge,
                        &instance.weights,
                        &x,
                    )?
                }
                _ => {
                    let pso = PsoConfig::default().with_seed(seed ^ *size_kb);
                    match solve_pso(&instance, &pso) {
                        Ok(r) => r.decision,
                        Err(SolveError::NoFeasibleSolution { best }) => best.decision,
                        Err(e) => return Err(e),
                    }
                }
            };
            Ok(SweepRow {
                weights: *weights,
                size_kb: *size_kb,
                scheme: *scheme,
                time_s: decision.devices.iter().map(|d| d.time_s).sum(),
                energy_j: decision.devices.iter().map(|d| d.energy_j).sum(),
                memory_mb: decision.devices.iter().map(|d| d.memory_mb).sum(),
                total_cost: decision.total_cost,
                offloaded: decision.offloaded_count(),
            })
        });
    rows.into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(SimError::from)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out =
        String::from("alpha_t,alpha_e,alpha_m,size_kb,scheme,time_s,energy_j,memory_mb,total_cost,offloaded\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.weights.time,
            r.weights.energy,
            r.weights.memory,
            r.size_kb,
            r.scheme,
            r.time_s,
            r.energy_j,
            r.memory_mb,
            r.total_cost,
            r.offloaded
        ));
    }
    out
}

/// One (request count, mode) sharing benchmark result.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub requests: usize,
    pub mode: NetworkMode,
    pub mean_latency_s: f64,
    pub total_hops: u64,
    pub hops_per_request: f64,
    pub acceptance: f64,
}

/// Run the configured workload at each request count under each mode.
pub fn share_bench(
    cfg: &ScenarioConfig,
    modes: &[NetworkMode],
    seed: u64,
) -> Result<Vec<BenchRow>, SimError> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &requests in &cfg.workload.bench_request_counts {
        for &mode in modes {
            cells.push((requests, mode));
        }
    }
    let results: Vec<Result<BenchRow, String>> = exec::ordered_map(&cells, |(requests, mode)| {
        let mut run_cfg = cfg.clone();
        run_cfg.workload.requests = *requests;
        let result = run_baseline(&run_cfg, seed, *mode).map_err(|e| e.to_string())?;
        Ok(BenchRow {
            requests: *requests,
            mode: *mode,
            mean_latency_s: result.mean_latency_s(),
            total_hops: result.total_hops(),
            hops_per_request: result.total_hops() as f64 / result.outcomes.len().max(1) as f64,
            acceptance: result.acceptance(),
        })
    });
    results
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| SimError::UnknownEntity(e))
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut out =
        String::from("requests,mode,mean_latency_s,total_hops,hops_per_request,acceptance\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.requests, r.mode, r.mean_latency_s, r.total_hops, r.hops_per_request, r.acceptance
        ));
    }
    out
}

/// A single self-check result.
#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Outcome of the property suite.
#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub checks: Vec<Check>,
}

impl VerifyReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One PASS/FAIL line per check.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.checks {
            out.push_str(&format!(
                "{} {}: {}\n",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                c.detail
            ));
        }
        let (ok, total) = (
            self.checks.iter().filter(|c| c.passed).count(),
            self.checks.len(),
        );
        out.push_str(&format!("{ok}/{total} checks passed\n"));
        out
    }
}

/// Run the full property suite: solver against oracle, crypto round
/// trips, consensus safety under faults, replica convergence, store
/// integrity, and hop dominance over the baselines.
///
/// `inject_tamper` flips one stored bit before the integrity check, to
/// prove the check can fail.
pub fn verify(cfg: &ScenarioConfig, seed: u64, inject_tamper: bool) -> VerifyReport {
    let mut checks = Vec::new();

    // Solver matches the exhaustive optimum on seeded instances.
    {
        let trials = 20;
        let mut optimal = 0;
        let mut below = 0;
        for t in 0..trials {
            let instance = crate::offload::synth::random_instance(seed + t, 8);
            let oracle = solve_exhaustive(&instance).expect("oracle");
            let cost = match solve_pso(&instance, &PsoConfig::default().with_seed(seed + t)) {
                Ok(r) => r.penalized_cost,
                Err(SolveError::NoFeasibleSolution { best }) => best.penalized_cost,
                Err(_) => f64::INFINITY,
            };
            if cost == oracle.penalized_cost {
                optimal += 1;
            }
            if cost < oracle.penalized_cost {
                below += 1;
            }
        }
        checks.push(Check {
            name: "solver-oracle-equivalence",
            passed: below == 0 && optimal >= trials * 9 / 10,
            detail: format!("{optimal}/{trials} optimal, {below} below oracle"),
        });
    }

    // Crypto round trips and tamper rejection.
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ok = 0;
        let trials = 100;
        for i in 0..trials {
            let keys = generate_keypair(format!("verify-{seed}-{i}").as_bytes());
            let len = rng.gen_range(16..4096);
            let mut payload = vec![0u8; len];
            rand::RngCore::fill_bytes(&mut rng, &mut payload);
            let ct = encrypt(&payload, &keys.public(), &mut rng);
            let round = decrypt(&ct, &keys).map(|p| p == payload).unwrap_or(false);
            let mut tampered = ct.clone();
            let bit = rng.gen_range(0..tampered.body.len().max(1) * 8);
            tampered.body[bit / 8] ^= 1 << (bit % 8);
            let rejected = decrypt(&tampered, &keys).is_err();
            if round && rejected {
                ok += 1;
            }
        }
        checks.push(Check {
            name: "crypto-round-trip",
            passed: ok == trials,
            detail: format!("{ok}/{trials} envelopes round-tripped and rejected tampering"),
        });
    }

    // Consensus safety with one silent and one equivocating node.
    {
        let mut safe = true;
        let mut detail = String::from("honest chains identical under faults");
        for (fault, label) in [
            (NodeBehavior::Silent, "silent"),
            (NodeBehavior::Equivocate, "equivocating"),
        ] {
            let mut nodes = pbft::make_cluster(4, 1, &format!("verify-{seed}-{label}"));
            nodes[3].behavior = fault;
            for round in 0..3u64 {
                let keys = generate_keypair(format!("verify-tx-{seed}-{round}").as_bytes());
                let payload = SharingPayload {
                    user_pk: keys.public(),
                    record_hash: crate::crypto::content_hash(&round.to_be_bytes(), round),
                    owner_pk: keys.public(),
                    timestamp: round,
                }
                .to_bytes();
                let batch = vec![LedgerTx::signed(TxKind::Sharing, payload, &keys, round)];
                if pbft::pbft_round(&mut nodes, batch).is_err() {
                    safe = false;
                    detail = format!("round {round} failed under a {label} node");
                }
            }
            let reference = nodes[0].chain.dump();
            for node in nodes.iter().take(3) {
                if node.chain.dump() != reference || node.chain.verify_integrity().is_err() {
                    safe = false;
                    detail = format!("honest chains diverged under a {label} node");
                }
            }
        }
        checks.push(Check {
            name: "consensus-safety",
            passed: safe,
            detail,
        });
    }

    // End-to-end storage round trip, replica convergence, and store
    // integrity (optionally with an injected fault).
    {
        let mut run_cfg = cfg.clone();
        run_cfg.workload.record_size_bytes = (30_000, 30_000);
        match Simulation::new(&run_cfg, seed, NetworkMode::Decentralized) {
            Ok(mut sim) => {
                let storage = sim.run_storage_phase();
                let pid = sim.patient_id(1, 0).to_string();
                let hid = sim.hospital_id(1).to_string();
                if inject_tamper {
                    if let Some(hash) = sim.registered_hash(1, &pid, &hid) {
                        sim.flip_stored_bit(1, &hash, 77);
                    }
                }
                let outcome = sim.run_request((0, 0), &pid, 1, SimTime::from_secs_f64(30.0));
                let converged = (1..sim.hospital_count())
                    .all(|h| sim.contract(h).replicated_bytes() == sim.contract(0).replicated_bytes());
                let passed = storage.is_ok() && outcome.integrity && outcome.accepted && converged;
                checks.push(Check {
                    name: "storage-round-trip",
                    passed,
                    detail: format!(
                        "integrity={} accepted={} replicas-converged={converged}",
                        outcome.integrity, outcome.accepted
                    ),
                });
            }
            Err(e) => checks.push(Check {
                name: "storage-round-trip",
                passed: false,
                detail: format!("simulation failed to build: {e}"),
            }),
        }
    }

    // Hop dominance against the lookup-directory and central-authority
    // baselines at every configured load point.
    {
        let modes = [
            NetworkMode::Decentralized,
            NetworkMode::Dht,
            NetworkMode::CentralAuthority,
        ];
        match share_bench(cfg, &modes, seed) {
            Ok(rows) => {
                let mut dominated = true;
                let mut detail = String::from("decentralized hops strictly lowest at every load");
                for &requests in &cfg.workload.bench_request_counts {
                    let hops = |mode: NetworkMode| {
                        rows.iter()
                            .find(|r| r.requests == requests && r.mode == mode)
                            .map(|r| r.total_hops)
                    };
                    let (Some(ours), Some(dht), Some(auth)) = (
                        hops(NetworkMode::Decentralized),
                        hops(NetworkMode::Dht),
                        hops(NetworkMode::CentralAuthority),
                    ) else {
                        dominated = false;
                        detail = "missing benchmark rows".into();
                        break;
                    };
                    if ours >= dht || ours >= auth {
                        dominated = false;
                        detail =
                            format!("at {requests} requests: ours={ours} dht={dht} authority={auth}");
                        break;
                    }
                }
                checks.push(Check {
                    name: "hop-dominance",
                    passed: dominated,
                    detail,
                });
            }
            Err(e) => checks.push(Check {
                name: "hop-dominance",
                passed: false,
                detail: format!("benchmark failed: {e}"),
            }),
        }
    }

    VerifyReport { checks }
}

/// Parse one weight triple like "0.5,0.25,0.25" or "1/3,1/3,1/3".
pub fn parse_weights(s: &str) -> Result<CostWeights, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected three comma-separated weights, got {s:?}"));
    }
    let parse_one = |p: &str| -> Result<f64, String> {
        let p = p.trim();
        if let Some((num, den)) = p.split_once('/') {
            let num: f64 = num.trim().parse().map_err(|_| format!("bad weight {p:?}"))?;
            let den: f64 = den.trim().parse().map_err(|_| format!("bad weight {p:?}"))?;
            if den == 0.0 {
                return Err(format!("zero denominator in {p:?}"));
            }
            Ok(num / den)
        } else {
            p.parse().map_err(|_| format!("bad weight {p:?}"))
        }
    };
    let w = CostWeights {
        time: parse_one(parts[0])?,
        energy: parse_one(parts[1])?,
        memory: parse_one(parts[2])?,
    };
    w.validate().map_err(|e| e.to_string())?;
    Ok(w)
}

/// Reference scenario shipped with the repository: queuing on and a
/// tight deadline so load trends are visible in the benchmark.
pub fn reference_config() -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.topology.fifo_queue = true;
    cfg.topology.mec_service_s = 0.06;
    cfg.workload.deadline_s = 0.9;
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sweep_emits_every_cell_and_edge_never_loses() {
        let cfg = ScenarioConfig::default();
        let sets = [
            CostWeights::equal(),
            parse_weights("1/6,2/3,1/6").unwrap(),
        ];
        let rows = offload_sweep(&cfg, &sets, 7).unwrap();
        assert_eq!(rows.len(), 2 * cfg.workload.sweep_sizes_kb.len() * 3);
        for &size in &cfg.workload.sweep_sizes_kb {
            for set in &sets {
                let find = |scheme: Scheme| {
                    rows.iter()
                        .find(|r| {
                            r.size_kb == size && r.scheme == scheme && r.weights == *set
                        })
                        .unwrap()
                };
                let local = find(Scheme::LocalOnly);
                let edge = find(Scheme::Edge);
                assert!(edge.total_cost <= local.total_cost);
                assert_eq!(local.offloaded, 0);
            }
        }
    }

    #[test]
    fn sweep_csv_is_deterministic() {
        let cfg = ScenarioConfig::default();
        let sets = [CostWeights::equal()];
        let a = sweep_csv(&offload_sweep(&cfg, &sets, 3).unwrap());
        let b = sweep_csv(&offload_sweep(&cfg, &sets, 3).unwrap());
        assert_eq!(a, b);
        assert!(a.starts_with("alpha_t,"));
    }

    #[test]
    fn weights_parser_accepts_fractions() {
        let w = parse_weights("1/3, 1/3, 1/3").unwrap();
        assert!((w.time - 1.0 / 3.0).abs() < 1e-15);
        assert!(parse_weights("0.5,0.5").is_err());
        assert!(parse_weights("0.5,0.4,0.3").is_err()); // sums to 1.2
    }

    #[test]
    fn verify_passes_clean_and_fails_with_injected_tamper() {
        let mut cfg = reference_config();
        cfg.workload.bench_request_counts = vec![2, 4];
        let clean = verify(&cfg, 9, false);
        assert!(clean.all_passed(), "{}", clean.render());
        let tampered = verify(&cfg, 9, true);
        assert!(!tampered.all_passed());
        assert!(tampered.render().contains("FAIL storage-round-trip"));
    }
}
