//! The access-control contract: a deterministic replicated state
//! machine holding the user registry, the patient-hash registry, and
//! the access event log.
//!
//! State splits into two halves. The replicated half (edge-server
//! directory, patient registry, global event log) is mutated only by
//! committed global-ledger transactions and must be byte-identical
//! across replicas. The hospital-local half (user maps, access log,
//! penalty list) is the hosting edge server's authority: users register
//! and authenticate where they live, and those records stay on the
//! local chain.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{decode_fields, encode_fields, field};
use crate::crypto::{
    content_hash, decrypt, sign, verify, Ciphertext, ContentHash, CryptoError, KeyPair, PublicKey,
    Signature,
};

#[derive(Debug, Error, PartialEq)]
pub enum ContractError {
    #[error("address already bound to a different public key")]
    DuplicateRegistration,
    #[error("malformed transaction: {0}")]
    MalformedTx(&'static str),
    #[error("no record registered for patient {pid} at {hospital}")]
    NotRegistered { pid: String, hospital: String },
    #[error("unknown edge server key")]
    UnknownMec,
}

/// 20-byte account address derived from a user public key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(pub [u8; 20]);

impl Address {
    /// First 20 bytes of the content hash of the public key bytes.
    pub fn derive(pk: &PublicKey) -> Self {
        let digest = content_hash(&pk.to_bytes(), 0);
        let mut out = [0u8; 20];
        out.copy_from_slice(&digest.0[..20]);
        Self(out)
    }

    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl std::fmt::Display for Address {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.hex())
    }
}

/// Registration payload: (user pk || user id || timestamp), indexed 1..=3.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistrationTx {
    pub user_pk: PublicKey,
    pub user_id: String,
    pub timestamp: u64,
}

impl RegistrationTx {
    pub fn to_bytes(&self) -> Vec<u8> {
        encode_fields(&[
            &self.user_pk.to_bytes(),
            self.user_id.as_bytes(),
            &self.timestamp.to_be_bytes(),
        ])
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContractError> {
        let fields =
            decode_fields(bytes).map_err(|_| ContractError::MalformedTx("registration"))?;
        if fields.len() != 3 {
            return Err(ContractError::MalformedTx("registration field count"));
        }
        Ok(Self {
            user_pk: PublicKey::from_bytes(field(&fields, 1).unwrap())
                .map_err(|_| ContractError::MalformedTx("registration pk"))?,
            user_id: String::from_utf8(field(&fields, 2).unwrap().to_vec())
                .map_err(|_| ContractError::MalformedTx("registration id"))?,
            timestamp: be64(field(&fields, 3).unwrap())
                .ok_or(ContractError::MalformedTx("registration timestamp"))?,
        })
    }
}

/// Retrieval request payload:
/// (user pk || user id || patient address || deadline || timestamp), indexed 1..=5.
/// The patient address nests (patient id, hospital id).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestTx {
    pub user_pk: PublicKey,
    pub user_id: String,
    pub patient_id: String,
    pub hospital_id: String,
    /// Latency deadline for this request, simulated nanoseconds.
    pub deadline_ns: u64,
    pub timestamp: u64,
}

impl RequestTx {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p_addr = encode_fields(&[self.patient_id.as_bytes(), self.hospital_id.as_bytes()]);
        encode_fields(&[
            &self.user_pk.to_bytes(),
            self.user_id.as_bytes(),
            &p_addr,
            &self.deadline_ns.to_be_bytes(),
            &self.timestamp.to_be_bytes(),
        ])
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContractError> {
        let fields = decode_fields(bytes).map_err(|_| ContractError::MalformedTx("request"))?;
        if fields.len() != 5 {
            return Err(ContractError::MalformedTx("request field count"));
        }
        let p_addr = decode_fields(field(&fields, 3).unwrap())
            .map_err(|_| ContractError::MalformedTx("patient address"))?;
        if p_addr.len() != 2 {
            return Err(ContractError::MalformedTx("patient address field count"));
        }
        Ok(Self {
            user_pk: PublicKey::from_bytes(field(&fields, 1).unwrap())
                .map_err(|_| ContractError::MalformedTx("request pk"))?,
            user_id: String::from_utf8(field(&fields, 2).unwrap().to_vec())
                .map_err(|_| ContractError::MalformedTx("request id"))?,
            patient_id: String::from_utf8(field(&p_addr, 1).unwrap().to_vec())
                .map_err(|_| ContractError::MalformedTx("patient id"))?,
            hospital_id: String::from_utf8(field(&p_addr, 2).unwrap().to_vec())
                .map_err(|_| ContractError::MalformedTx("hospital id"))?,
            deadline_ns: be64(field(&fields, 4).unwrap())
                .ok_or(ContractError::MalformedTx("deadline"))?,
            timestamp: be64(field(&fields, 5).unwrap())
                .ok_or(ContractError::MalformedTx("request timestamp"))?,
        })
    }
}

fn be64(bytes: &[u8]) -> Option<u64> {
    let arr: [u8; 8] = bytes.try_into().ok()?;
    Some(u64::from_be_bytes(arr))
}

/// Proof of successful authentication, signed by the hosting edge server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    /// Signature over the decrypted request bytes.
    pub signature: Signature,
    pub user_pk: PublicKey,
    pub user_id: String,
    pub timestamp: u64,
}

impl Certificate {
    /// A certificate is valid iff the hosting server signed exactly the
    /// request bytes it authenticated.
    pub fn verify(&self, request_bytes: &[u8], mec_pk: &PublicKey) -> bool {
        verify(&self.signature, request_bytes, mec_pk)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accepted,
    Denied,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Accepted => "Accepted",
            Verdict::Denied => "Denied",
        })
    }
}

/// One authentication attempt, appended exactly once per call.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessResult {
    /// The calling edge server (the contract's msg.sender).
    pub sender: String,
    pub verdict: Verdict,
    pub flag: bool,
    pub timestamp: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenyReason {
    /// Request ciphertext failed authenticated decryption.
    DecryptFailed,
    /// Decrypted bytes did not decode as a request.
    Malformed,
    /// Caller is not the hosting edge server.
    NotHostMec,
    /// Principal is on the penalty list.
    Penalized,
    /// Claimed public key is not registered at this hospital.
    UnknownKey,
    /// Public key registered, but the claimed identity does not match.
    IdMismatch,
}

/// Outcome of one authentication attempt.
#[derive(Debug, Clone, PartialEq)]
pub enum AuthOutcome {
    Granted {
        certificate: Certificate,
        request: RequestTx,
        /// Decrypted request bytes the certificate signs.
        request_bytes: Vec<u8>,
    },
    Denied { reason: DenyReason },
}

impl AuthOutcome {
    pub fn is_granted(&self) -> bool {
        matches!(self, AuthOutcome::Granted { .. })
    }
}

/// A committed record location: hash plus owning edge server.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistryEntry {
    pub record_hash: ContentHash,
    pub owner_pk: PublicKey,
    pub timestamp: u64,
}

/// Globally broadcast data events, applied in commit order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GlobalEvent {
    /// A record was shared with a user (broadcast after data return).
    Shared {
        user_pk: PublicKey,
        record_hash: ContentHash,
        owner_pk: PublicKey,
        timestamp: u64,
    },
    /// One edge server asked another for a patient's record.
    FetchRequested {
        patient_id: String,
        user_pk: PublicKey,
        requester_pk: PublicKey,
        timestamp: u64,
    },
}

/// Full contract state for one hospital's replica.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContractState {
    /// Hospital whose edge server hosts this replica.
    pub host_hospital: String,

    // -- replicated via the global ledger --
    /// Edge server public key -> hospital id, fixed at initialization.
    pub mec_directory: BTreeMap<PublicKey, String>,
    /// (patient id, hospital id) -> latest committed record location.
    pub patient_registry: BTreeMap<(String, String), RegistryEntry>,
    pub global_events: Vec<GlobalEvent>,

    // -- hospital-local authority --
    pub user_pk_map: BTreeMap<Address, PublicKey>,
    pub user_id_map: BTreeMap<Address, String>,
    pub access_log: Vec<AccessResult>,
    pub penalty_list: BTreeSet<Address>,
}

impl ContractState {
    pub fn new(host_hospital: impl Into<String>) -> Self {
        Self {
            host_hospital: host_hospital.into(),
            ..Self::default()
        }
    }

    /// Record an edge server's key at initialization. Must be called
    /// identically on every replica.
    pub fn register_mec(&mut self, hospital_id: impl Into<String>, pk: PublicKey) {
        self.mec_directory.insert(pk, hospital_id.into());
    }

    pub fn hospital_of(&self, pk: &PublicKey) -> Result<&str, ContractError> {
        self.mec_directory
            .get(pk)
            .map(String::as_str)
            .ok_or(ContractError::UnknownMec)
    }

    /// Register a user from a registration transaction. Returns the
    /// trace signature (published to the local chain) and the derived
    /// address. Re-registering an identical key is idempotent; a
    /// different key under the same address is rejected.
    pub fn register_user(
        &mut self,
        treg_bytes: &[u8],
        mec_keys: &KeyPair,
    ) -> Result<(Signature, Address), ContractError> {
        let address = self.apply_registration(treg_bytes)?;
        let trace_sig = sign(treg_bytes, mec_keys);
        Ok((trace_sig, address))
    }

    /// The map-update half of registration, usable when replaying a
    /// committed transaction.
    pub fn apply_registration(&mut self, treg_bytes: &[u8]) -> Result<Address, ContractError> {
        let tx = RegistrationTx::from_bytes(treg_bytes)?;
        let address = Address::derive(&tx.user_pk);
        if let Some(existing) = self.user_pk_map.get(&address) {
            if *existing != tx.user_pk {
                return Err(ContractError::DuplicateRegistration);
            }
        }
        self.user_pk_map.insert(address, tx.user_pk);
        self.user_id_map.insert(address, tx.user_id);
        Ok(address)
    }

    /// Commit a record location. Later timestamps overwrite earlier
    /// ones; ties go to the later commit.
    pub fn register_record(
        &mut self,
        record_hash: ContentHash,
        patient_id: impl Into<String>,
        hospital_id: impl Into<String>,
        owner_pk: PublicKey,
        timestamp: u64,
    ) {
        let key = (patient_id.into(), hospital_id.into());
        let entry = RegistryEntry {
            record_hash,
            owner_pk,
            timestamp,
        };
        match self.patient_registry.get(&key) {
            Some(existing) if existing.timestamp > timestamp => {}
            _ => {
                self.patient_registry.insert(key, entry);
            }
        }
    }

    /// Resolve a patient's record location. Exact byte equality on the
    /// composite (patient, hospital) key.
    pub fn lookup_hash(
        &self,
        patient_id: &str,
        hospital_id: &str,
    ) -> Result<&RegistryEntry, ContractError> {
        self.patient_registry
            .get(&(patient_id.to_string(), hospital_id.to_string()))
            .ok_or_else(|| ContractError::NotRegistered {
                pid: patient_id.to_string(),
                hospital: hospital_id.to_string(),
            })
    }

    /// Authenticate an encrypted retrieval request.
    ///
    /// Exactly one [`AccessResult`] is appended per call, whatever the
    /// outcome. A certificate is issued only when the caller is the
    /// hosting server and both the key map and the id map agree with
    /// the claimed identity.
    pub fn authenticate(
        &mut self,
        encrypted_request: &Ciphertext,
        mec_keys: &KeyPair,
        caller: &str,
        now: u64,
    ) -> AuthOutcome {
        let outcome = self.check_request(encrypted_request, mec_keys, caller, now);
        let verdict = if outcome.is_granted() {
            Verdict::Accepted
        } else {
            Verdict::Denied
        };
        self.access_log.push(AccessResult {
            sender: caller.to_string(),
            verdict,
            flag: verdict == Verdict::Accepted,
            timestamp: now,
        });
        outcome
    }

    fn check_request(
        &mut self,
        encrypted_request: &Ciphertext,
        mec_keys: &KeyPair,
        caller: &str,
        now: u64,
    ) -> AuthOutcome {
        if caller != self.host_hospital {
            return AuthOutcome::Denied {
                reason: DenyReason::NotHostMec,
            };
        }
        let request_bytes = match decrypt(encrypted_request, mec_keys) {
            Ok(bytes) => bytes,
            Err(CryptoError::AuthFailure) | Err(CryptoError::Malformed(_)) => {
                return AuthOutcome::Denied {
                    reason: DenyReason::DecryptFailed,
                }
            }
        };
        let request = match RequestTx::from_bytes(&request_bytes) {
            Ok(r) => r,
            Err(_) => {
                return AuthOutcome::Denied {
                    reason: DenyReason::Malformed,
                }
            }
        };
        let address = Address::derive(&request.user_pk);
        if self.penalty_list.contains(&address) {
            return AuthOutcome::Denied {
                reason: DenyReason::Penalized,
            };
        }
        match self.user_pk_map.get(&address) {
            Some(pk) if *pk == request.user_pk => {}
            _ => {
                self.penalty_list.insert(address);
                return AuthOutcome::Denied {
                    reason: DenyReason::UnknownKey,
                };
            }
        }
        match self.user_id_map.get(&address) {
            Some(id) if *id == request.user_id => {}
            _ => {
                self.penalty_list.insert(address);
                return AuthOutcome::Denied {
                    reason: DenyReason::IdMismatch,
                };
            }
        }
        let certificate = Certificate {
            signature: sign(&request_bytes, mec_keys),
            user_pk: request.user_pk,
            user_id: request.user_id.clone(),
            timestamp: now,
        };
        AuthOutcome::Granted {
            certificate,
            request,
            request_bytes,
        }
    }

    /// Clear the penalty list (operator intervention).
    pub fn reset_penalties(&mut self) {
        self.penalty_list.clear();
    }

    /// Append a committed global data event.
    pub fn record_global_event(&mut self, event: GlobalEvent) {
        self.global_events.push(event);
    }

    /// Access log as newline-delimited (sender, verdict, timestamp) records.
    pub fn export_access_log(&self) -> String {
        let mut out = String::new();
        for entry in &self.access_log {
            out.push_str(&format!(
                "{},{},{}\n",
                entry.sender, entry.verdict, entry.timestamp
            ));
        }
        out
    }

    /// Canonical serialization of the globally replicated half.
    pub fn replicated_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        write_segment(&mut out, b"directory", self.mec_directory.len(), |buf| {
            for (pk, hospital) in &self.mec_directory {
                push_bytes(buf, &pk.to_bytes());
                push_bytes(buf, hospital.as_bytes());
            }
        });
        write_segment(&mut out, b"registry", self.patient_registry.len(), |buf| {
            for ((pid, hp), entry) in &self.patient_registry {
                push_bytes(buf, pid.as_bytes());
                push_bytes(buf, hp.as_bytes());
                push_bytes(buf, &entry.record_hash.0);
                push_bytes(buf, &entry.owner_pk.to_bytes());
                buf.extend_from_slice(&entry.timestamp.to_be_bytes());
            }
        });
        write_segment(&mut out, b"events", self.global_events.len(), |buf| {
            for event in &self.global_events {
                match event {
                    GlobalEvent::Shared {
                        user_pk,
                        record_hash,
                        owner_pk,
                        timestamp,
                    } => {
                        buf.push(1);
                        push_bytes(buf, &user_pk.to_bytes());
                        push_bytes(buf, &record_hash.0);
                        push_bytes(buf, &owner_pk.to_bytes());
                        buf.extend_from_slice(&timestamp.to_be_bytes());
                    }
                    GlobalEvent::FetchRequested {
                        patient_id,
                        user_pk,
                        requester_pk,
                        timestamp,
                    } => {
                        buf.push(2);
                        push_bytes(buf, patient_id.as_bytes());
                        push_bytes(buf, &user_pk.to_bytes());
                        push_bytes(buf, &requester_pk.to_bytes());
                        buf.extend_from_slice(&timestamp.to_be_bytes());
                    }
                }
            }
        });
        out
    }

    /// Canonical serialization of the whole state, local half included.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = self.replicated_bytes();
        push_bytes(&mut out, self.host_hospital.as_bytes());
        write_segment(&mut out, b"user-pks", self.user_pk_map.len(), |buf| {
            for (addr, pk) in &self.user_pk_map {
                buf.extend_from_slice(&addr.0);
                push_bytes(buf, &pk.to_bytes());
            }
        });
        write_segment(&mut out, b"user-ids", self.user_id_map.len(), |buf| {
            for (addr, id) in &self.user_id_map {
                buf.extend_from_slice(&addr.0);
                push_bytes(buf, id.as_bytes());
            }
        });
        write_segment(&mut out, b"access-log", self.access_log.len(), |buf| {
            for entry in &self.access_log {
                push_bytes(buf, entry.sender.as_bytes());
                buf.push(matches!(entry.verdict, Verdict::Accepted) as u8);
                buf.push(entry.flag as u8);
                buf.extend_from_slice(&entry.timestamp.to_be_bytes());
            }
        });
        write_segment(&mut out, b"penalties", self.penalty_list.len(), |buf| {
            for addr in &self.penalty_list {
                buf.extend_from_slice(&addr.0);
            }
        });
        out
    }
}

fn write_segment(out: &mut Vec<u8>, tag: &[u8], count: usize, fill: impl FnOnce(&mut Vec<u8>)) {
    push_bytes(out, tag);
    out.extend_from_slice(&(count as u64).to_be_bytes());
    fill(out);
}

fn push_bytes(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u64).to_be_bytes());
    out.extend_from_slice(bytes);
}
