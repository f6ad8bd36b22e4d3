//! Core library for a deterministic hospital edge network simulator.
//!
//! The pieces fit together in layers:
//!
//! - [`offload`] — the device/edge task placement cost model and the
//!   binary swarm / exhaustive solvers over it.
//! - [`crypto`] — seeded key pairs, hybrid envelope encryption, signing,
//!   and content hashing shared by every protocol step.
//! - [`store`] — content-addressed ciphertext storage, one node per
//!   edge server, with peer replication.
//! - [`contract`] — the replicated access-control state machine: user
//!   registry, patient-hash registry, authentication, access log.
//! - [`ledger`] — hash-chained blocks ordered by a quorum-vote consensus
//!   round over the edge servers, applied to contract replicas.
//! - [`sim`] — the discrete-event network simulation that drives the
//!   storage and sharing protocols end to end over modeled links.
//! - [`harness`] — the experiment drivers behind the command line:
//!   placement sweeps, sharing benchmarks, and the self-check suite.
//!
//! Everything is deterministic: identical (config, seed) pairs produce
//! identical decisions, hashes, ledgers, and metrics.

pub mod codec;
pub mod config;
pub mod contract;
pub mod crypto;
pub mod exec;
pub mod harness;
pub mod ledger;
pub mod offload;
pub mod sim;
pub mod store;
