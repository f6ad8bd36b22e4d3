//! Hash-chained ledgers and the consensus service over them.
//!
//! Two tiers: each hospital appends to a single-writer local chain
//! (registrations and user requests), while storage and sharing
//! transactions go through a quorum consensus round across all edge
//! servers onto the replicated global chain. Committed blocks are
//! applied to contract replicas in block order, exactly once.

pub mod pbft;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{decode_fields, encode_fields, field};
use crate::contract::{ContractError, ContractState, GlobalEvent};
use crate::crypto::{content_hash, sign, verify, ContentHash, KeyPair, PublicKey, Signature};

pub use pbft::{pbft_round, NodeBehavior, PbftNode, RoundStats};

#[derive(Debug, Error, PartialEq)]
pub enum LedgerError {
    #[error("transaction signature does not verify")]
    InvalidSignature,
    #[error("fewer than the required quorum of honest nodes responded")]
    NoQuorum,
    #[error("block height {got} does not extend chain at height {expected}")]
    HeightMismatch { expected: u64, got: u64 },
    #[error("block does not link to the chain tip")]
    BrokenLink,
    #[error("block transaction root does not match its body")]
    RootMismatch,
    #[error("commit certificate lacks a quorum of valid votes")]
    BadCertificate,
}

/// What a transaction carries; payload codecs live alongside.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TxKind {
    /// A record hash committed to the registry.
    Storage,
    /// A user registration (local chains only).
    Registration,
    /// A completed data-sharing event, broadcast after data return.
    Sharing,
    /// One edge server requesting a record from another.
    InterMecRequest,
    /// A user's encrypted retrieval request, traced on its hospital's
    /// local chain only.
    Request,
}

impl TxKind {
    fn tag(self) -> u8 {
        match self {
            TxKind::Storage => 1,
            TxKind::Registration => 2,
            TxKind::Sharing => 3,
            TxKind::InterMecRequest => 4,
            TxKind::Request => 5,
        }
    }
}

/// A signed ledger transaction.
#[derive(Debug, Clone, PartialEq)]
pub struct LedgerTx {
    pub kind: TxKind,
    pub payload: Vec<u8>,
    pub submitter: PublicKey,
    pub signature: Signature,
    pub timestamp: u64,
}

impl LedgerTx {
    pub fn signed(kind: TxKind, payload: Vec<u8>, keys: &KeyPair, timestamp: u64) -> Self {
        let mut tx = Self {
            kind,
            payload,
            submitter: keys.public(),
            signature: Signature([0; 64]),
            timestamp,
        };
        tx.signature = sign(&tx.signing_bytes(), keys);
        tx
    }

    fn signing_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1 + 8 + 64 + self.payload.len());
        out.push(self.kind.tag());
        out.extend_from_slice(&self.timestamp.to_be_bytes());
        out.extend_from_slice(&self.submitter.to_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn verify_signature(&self) -> bool {
        verify(&self.signature, &self.signing_bytes(), &self.submitter)
    }

    /// Content hash of the full transaction, signature included.
    pub fn hash(&self) -> ContentHash {
        let mut bytes = self.signing_bytes();
        bytes.extend_from_slice(&self.signature.0);
        content_hash(&bytes, 0)
    }

    pub fn wire_len(&self) -> usize {
        1 + 8 + 64 + 64 + self.payload.len()
    }
}

/// Storage commit: (record hash || patient id || owner pk || timestamp).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoragePayload {
    pub record_hash: ContentHash,
    pub patient_id: String,
    pub owner_pk: PublicKey,
    pub timestamp: u64,
}

impl StoragePayload {
    pub fn to_bytes(&self) -> Vec<u8> {
        encode_fields(&[
            &self.record_hash.0,
            self.patient_id.as_bytes(),
            &self.owner_pk.to_bytes(),
            &self.timestamp.to_be_bytes(),
        ])
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContractError> {
        let fields = decode_fields(bytes).map_err(|_| ContractError::MalformedTx("storage"))?;
        if fields.len() != 4 {
            return Err(ContractError::MalformedTx("storage field count"));
        }
        Ok(Self {
            record_hash: hash_field(field(&fields, 1).unwrap())?,
            patient_id: utf8_field(field(&fields, 2).unwrap())?,
            owner_pk: pk_field(field(&fields, 3).unwrap())?,
            timestamp: ts_field(field(&fields, 4).unwrap())?,
        })
    }
}

/// Sharing broadcast: (user pk || record hash || owner pk || timestamp).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharingPayload {
    pub user_pk: PublicKey,
    pub record_hash: ContentHash,
    pub owner_pk: PublicKey,
    pub timestamp: u64,
}

impl SharingPayload {
    pub fn to_bytes(&self) -> Vec<u8> {
        encode_fields(&[
            &self.user_pk.to_bytes(),
            &self.record_hash.0,
            &self.owner_pk.to_bytes(),
            &self.timestamp.to_be_bytes(),
        ])
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContractError> {
        let fields = decode_fields(bytes).map_err(|_| ContractError::MalformedTx("sharing"))?;
        if fields.len() != 4 {
            return Err(ContractError::MalformedTx("sharing field count"));
        }
        Ok(Self {
            user_pk: pk_field(field(&fields, 1).unwrap())?,
            record_hash: hash_field(field(&fields, 2).unwrap())?,
            owner_pk: pk_field(field(&fields, 3).unwrap())?,
            timestamp: ts_field(field(&fields, 4).unwrap())?,
        })
    }
}

/// Cross-hospital fetch: (patient id || user pk || requester pk || timestamp).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterMecPayload {
    pub patient_id: String,
    pub user_pk: PublicKey,
    pub requester_pk: PublicKey,
    pub timestamp: u64,
}

impl InterMecPayload {
    pub fn to_bytes(&self) -> Vec<u8> {
        encode_fields(&[
            self.patient_id.as_bytes(),
            &self.user_pk.to_bytes(),
            &self.requester_pk.to_bytes(),
            &self.timestamp.to_be_bytes(),
        ])
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ContractError> {
        let fields =
            decode_fields(bytes).map_err(|_| ContractError::MalformedTx("inter-mec request"))?;
        if fields.len() != 4 {
            return Err(ContractError::MalformedTx("inter-mec field count"));
        }
        Ok(Self {
            patient_id: utf8_field(field(&fields, 1).unwrap())?,
            user_pk: pk_field(field(&fields, 2).unwrap())?,
            requester_pk: pk_field(field(&fields, 3).unwrap())?,
            timestamp: ts_field(field(&fields, 4).unwrap())?,
        })
    }
}

fn hash_field(bytes: &[u8]) -> Result<ContentHash, ContractError> {
    let arr: [u8; 32] = bytes
        .try_into()
        .map_err(|_| ContractError::MalformedTx("hash field"))?;
    Ok(ContentHash(arr))
}

fn pk_field(bytes: &[u8]) -> Result<PublicKey, ContractError> {
    PublicKey::from_bytes(bytes).map_err(|_| ContractError::MalformedTx("public key field"))
}

fn utf8_field(bytes: &[u8]) -> Result<String, ContractError> {
    String::from_utf8(bytes.to_vec()).map_err(|_| ContractError::MalformedTx("utf8 field"))
}

fn ts_field(bytes: &[u8]) -> Result<u64, ContractError> {
    let arr: [u8; 8] = bytes
        .try_into()
        .map_err(|_| ContractError::MalformedTx("timestamp field"))?;
    Ok(u64::from_be_bytes(arr))
}

/// One commit vote, part of a block's certificate.
#[derive(Debug, Clone, PartialEq)]
pub struct CommitVote {
    pub voter: String,
    pub voter_pk: PublicKey,
    pub signature: Signature,
}

pub const GENESIS_HASH: ContentHash = ContentHash([0u8; 32]);

/// A committed block.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub height: u64,
    pub prev_hash: ContentHash,
    pub tx_root: ContentHash,
    pub transactions: Vec<LedgerTx>,
    pub proposer: String,
    /// At least 2f+1 commit votes over (view, height, header hash).
    pub commit_certificate: Vec<CommitVote>,
}

impl Block {
    /// Root over the concatenated transaction hashes.
    pub fn root_of(transactions: &[LedgerTx]) -> ContentHash {
        let mut concat = Vec::with_capacity(transactions.len() * 32);
        for tx in transactions {
            concat.extend_from_slice(&tx.hash().0);
        }
        content_hash(&concat, 0)
    }

    /// Chained header hash over (height, prev, root, proposer); the
    /// commit certificate is excluded since votes sign this hash.
    pub fn header_hash(&self) -> ContentHash {
        let mut bytes = Vec::with_capacity(8 + 32 + 32 + self.proposer.len());
        bytes.extend_from_slice(&self.height.to_be_bytes());
        bytes.extend_from_slice(&self.prev_hash.0);
        bytes.extend_from_slice(&self.tx_root.0);
        bytes.extend_from_slice(self.proposer.as_bytes());
        content_hash(&bytes, 0)
    }

    /// Check the certificate holds >= quorum distinct valid votes.
    pub fn verify_commit_certificate(&self, view: u64, quorum: usize) -> bool {
        let header = self.header_hash();
        let mut voters = std::collections::BTreeSet::new();
        for vote in &self.commit_certificate {
            let msg = pbft::vote_bytes(pbft::PhaseTag::Commit, view, self.height, &header);
            if verify(&vote.signature, &msg, &vote.voter_pk) {
                voters.insert(vote.voter.clone());
            }
        }
        voters.len() >= quorum
    }
}

/// An append-only chain with link validation.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Chain {
    blocks: Vec<Block>,
}

impl Chain {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64
    }

    pub fn tip_hash(&self) -> ContentHash {
        self.blocks
            .last()
            .map(|b| b.header_hash())
            .unwrap_or(GENESIS_HASH)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn append(&mut self, block: Block) -> Result<(), LedgerError> {
        if block.height != self.height() {
            return Err(LedgerError::HeightMismatch {
                expected: self.height(),
                got: block.height,
            });
        }
        if block.prev_hash != self.tip_hash() {
            return Err(LedgerError::BrokenLink);
        }
        if block.tx_root != Block::root_of(&block.transactions) {
            return Err(LedgerError::RootMismatch);
        }
        self.blocks.push(block);
        Ok(())
    }

    /// Recompute every link and root; errors on the first mismatch.
    pub fn verify_integrity(&self) -> Result<(), LedgerError> {
        let mut prev = GENESIS_HASH;
        for (i, block) in self.blocks.iter().enumerate() {
            if block.height != i as u64 {
                return Err(LedgerError::HeightMismatch {
                    expected: i as u64,
                    got: block.height,
                });
            }
            if block.prev_hash != prev {
                return Err(LedgerError::BrokenLink);
            }
            if block.tx_root != Block::root_of(&block.transactions) {
                return Err(LedgerError::RootMismatch);
            }
            prev = block.header_hash();
        }
        Ok(())
    }

    /// One line per block: height, prev hash, root, tx count.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for block in &self.blocks {
            out.push_str(&format!(
                "{} {} {} {}\n",
                block.height,
                block.prev_hash.hex(),
                block.tx_root.hex(),
                block.transactions.len()
            ));
        }
        out
    }
}

/// A hospital's single-writer local chain. Only the hosting edge
/// server appends; there is no consensus round.
#[derive(Debug, Clone)]
pub struct LocalLedger {
    pub hospital_id: String,
    chain: Chain,
    pending: Vec<LedgerTx>,
}

impl LocalLedger {
    pub fn new(hospital_id: impl Into<String>) -> Self {
        Self {
            hospital_id: hospital_id.into(),
            chain: Chain::new(),
            pending: Vec::new(),
        }
    }

    /// Validate and pool a transaction.
    pub fn submit(&mut self, tx: LedgerTx) -> Result<(), LedgerError> {
        if !tx.verify_signature() {
            return Err(LedgerError::InvalidSignature);
        }
        self.pending.push(tx);
        Ok(())
    }

    /// Close the pending pool into a block (single-writer append).
    pub fn seal(&mut self) -> Option<&Block> {
        if self.pending.is_empty() {
            return None;
        }
        let transactions = std::mem::take(&mut self.pending);
        let block = Block {
            height: self.chain.height(),
            prev_hash: self.chain.tip_hash(),
            tx_root: Block::root_of(&transactions),
            transactions,
            proposer: self.hospital_id.clone(),
            commit_certificate: Vec::new(),
        };
        self.chain.append(block).expect("local append is self-consistent");
        self.chain.blocks().last()
    }

    pub fn chain(&self) -> &Chain {
        &self.chain
    }
}

/// Deterministic batching: blocks close at `batch_size` transactions or
/// `timeout_ns` after the oldest pending one, whichever comes first.
#[derive(Debug, Clone)]
pub struct Batcher {
    pub batch_size: usize,
    pub timeout_ns: u64,
    pending: Vec<LedgerTx>,
    oldest: Option<u64>,
}

impl Batcher {
    pub fn new(batch_size: usize, timeout_ns: u64) -> Self {
        Self {
            batch_size,
            timeout_ns,
            pending: Vec::new(),
            oldest: None,
        }
    }

    /// Add a transaction; returns a full batch when it closes.
    pub fn push(&mut self, now: u64, tx: LedgerTx) -> Option<Vec<LedgerTx>> {
        if self.pending.is_empty() {
            self.oldest = Some(now);
        }
        self.pending.push(tx);
        if self.pending.len() >= self.batch_size {
            self.take()
        } else {
            None
        }
    }

    /// Close the batch if the timeout has elapsed.
    pub fn flush_due(&mut self, now: u64) -> Option<Vec<LedgerTx>> {
        match self.oldest {
            Some(oldest) if now.saturating_sub(oldest) >= self.timeout_ns => self.take(),
            _ => None,
        }
    }

    /// When the current batch will time out, if one is pending.
    pub fn next_deadline(&self) -> Option<u64> {
        self.oldest.map(|t| t + self.timeout_ns)
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    fn take(&mut self) -> Option<Vec<LedgerTx>> {
        self.oldest = None;
        if self.pending.is_empty() {
            None
        } else {
            Some(std::mem::take(&mut self.pending))
        }
    }
}

/// A contract replica fed by committed global blocks, exactly once and
/// in height order. Malformed transactions inside a committed block are
/// skipped identically everywhere and noted as anomalies.
#[derive(Debug, Clone)]
pub struct Replica {
    pub state: ContractState,
    next_height: u64,
    pub anomalies: Vec<String>,
}

impl Replica {
    pub fn new(state: ContractState) -> Self {
        Self {
            state,
            next_height: 0,
            anomalies: Vec::new(),
        }
    }

    pub fn applied_height(&self) -> u64 {
        self.next_height
    }

    pub fn apply_committed(&mut self, block: &Block) -> Result<(), LedgerError> {
        if block.height != self.next_height {
            return Err(LedgerError::HeightMismatch {
                expected: self.next_height,
                got: block.height,
            });
        }
        for (i, tx) in block.transactions.iter().enumerate() {
            if let Err(reason) = self.apply_tx(tx) {
                let note = format!("block {} tx {i}: {reason}", block.height);
                log::warn!("skipping malformed committed tx: {note}");
                self.anomalies.push(note);
            }
        }
        self.next_height += 1;
        Ok(())
    }

    fn apply_tx(&mut self, tx: &LedgerTx) -> Result<(), ContractError> {
        match tx.kind {
            TxKind::Storage => {
                let p = StoragePayload::from_bytes(&tx.payload)?;
                let hospital = self.state.hospital_of(&p.owner_pk)?.to_string();
                self.state.register_record(
                    p.record_hash,
                    p.patient_id,
                    hospital,
                    p.owner_pk,
                    p.timestamp,
                );
            }
            TxKind::Registration => {
                self.state.apply_registration(&tx.payload)?;
            }
            TxKind::Sharing => {
                let p = SharingPayload::from_bytes(&tx.payload)?;
                self.state.record_global_event(GlobalEvent::Shared {
                    user_pk: p.user_pk,
                    record_hash: p.record_hash,
                    owner_pk: p.owner_pk,
                    timestamp: p.timestamp,
                });
            }
            TxKind::InterMecRequest => {
                let p = InterMecPayload::from_bytes(&tx.payload)?;
                self.state.record_global_event(GlobalEvent::FetchRequested {
                    patient_id: p.patient_id,
                    user_pk: p.user_pk,
                    requester_pk: p.requester_pk,
                    timestamp: p.timestamp,
                });
            }
            TxKind::Request => {
                // Encrypted request traces belong on local chains only.
                return Err(ContractError::MalformedTx(
                    "request tx committed to the global chain",
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::generate_keypair;

    fn sample_tx(seed: u64, kind: TxKind) -> LedgerTx {
        let keys = generate_keypair(&seed.to_be_bytes());
        let payload = SharingPayload {
            user_pk: keys.public(),
            record_hash: content_hash(&seed.to_be_bytes(), seed),
            owner_pk: keys.public(),
            timestamp: seed,
        }
        .to_bytes();
        LedgerTx::signed(kind, payload, &keys, seed)
    }

    #[test]
    fn tx_signature_round_trip() {
        let tx = sample_tx(1, TxKind::Sharing);
        assert!(tx.verify_signature());
        let mut forged = tx.clone();
        forged.timestamp += 1;
        assert!(!forged.verify_signature());
    }

    #[test]
    fn local_submit_rejects_bad_signature() {
        let mut ledger = LocalLedger::new("hospital-1");
        let mut tx = sample_tx(2, TxKind::Registration);
        tx.payload.push(0);
        assert_eq!(ledger.submit(tx), Err(LedgerError::InvalidSignature));
        assert!(ledger.seal().is_none());
    }

    #[test]
    fn chain_integrity_recomputes_links_and_roots() {
        let mut ledger = LocalLedger::new("hospital-1");
        for i in 0..6 {
            ledger.submit(sample_tx(i, TxKind::Registration)).unwrap();
            if i % 2 == 1 {
                ledger.seal();
            }
        }
        ledger.chain().verify_integrity().unwrap();
        assert_eq!(ledger.chain().height(), 3);

        let mut broken = ledger.chain().clone();
        broken.blocks[1].tx_root = content_hash(b"tampered", 0);
        assert!(broken.verify_integrity().is_err());
    }

    #[test]
    fn batcher_closes_at_size_then_timeout() {
        let mut batcher = Batcher::new(4, 1_000_000_000);
        // 12 txs at batch size 4: three full batches, in order.
        let mut batches = Vec::new();
        for i in 0..12 {
            if let Some(batch) = batcher.push(i, sample_tx(i, TxKind::Storage)) {
                batches.push(batch);
            }
        }
        assert_eq!(batches.len(), 3);
        assert!(batches.iter().all(|b| b.len() == 4));
        let order: Vec<u64> = batches.concat().iter().map(|t| t.timestamp).collect();
        assert_eq!(order, (0..12).collect::<Vec<_>>());

        // a lone tx flushes only after the timeout
        assert!(batcher.push(100, sample_tx(100, TxKind::Storage)).is_none());
        assert!(batcher.flush_due(100 + 999_999_999).is_none());
        let flushed = batcher.flush_due(100 + 1_000_000_000).unwrap();
        assert_eq!(flushed.len(), 1);
    }

    #[test]
    fn replica_applies_blocks_exactly_once() {
        let mec = generate_keypair(b"mec-a");
        let mut state = ContractState::new("hospital-a");
        state.register_mec("hospital-a", mec.public());
        let mut replica = Replica::new(state);

        let payload = StoragePayload {
            record_hash: content_hash(b"rec", 7),
            patient_id: "p-1".into(),
            owner_pk: mec.public(),
            timestamp: 7,
        };
        let tx = LedgerTx::signed(TxKind::Storage, payload.to_bytes(), &mec, 7);
        let transactions = vec![tx];
        let block = Block {
            height: 0,
            prev_hash: GENESIS_HASH,
            tx_root: Block::root_of(&transactions),
            transactions,
            proposer: "hospital-a".into(),
            commit_certificate: Vec::new(),
        };

        replica.apply_committed(&block).unwrap();
        assert!(replica.state.lookup_hash("p-1", "hospital-a").is_ok());
        assert_eq!(
            replica.apply_committed(&block),
            Err(LedgerError::HeightMismatch {
                expected: 1,
                got: 0
            })
        );
    }

    #[test]
    fn empty_block_leaves_state_unchanged() {
        let mut replica = Replica::new(ContractState::new("h"));
        let before = replica.state.canonical_bytes();
        let block = Block {
            height: 0,
            prev_hash: GENESIS_HASH,
            tx_root: Block::root_of(&[]),
            transactions: vec![],
            proposer: "h".into(),
            commit_certificate: Vec::new(),
        };
        replica.apply_committed(&block).unwrap();
        assert_eq!(replica.state.canonical_bytes(), before);
    }

    #[test]
    fn malformed_committed_tx_is_skipped_with_anomaly() {
        let mec = generate_keypair(b"mec-a");
        let mut state = ContractState::new("hospital-a");
        state.register_mec("hospital-a", mec.public());
        let mut replica = Replica::new(state);

        let mut tx = sample_tx(5, TxKind::Storage);
        tx.payload = b"garbage".to_vec();
        let transactions = vec![tx];
        let block = Block {
            height: 0,
            prev_hash: GENESIS_HASH,
            tx_root: Block::root_of(&transactions),
            transactions,
            proposer: "hospital-a".into(),
            commit_certificate: Vec::new(),
        };
        replica.apply_committed(&block).unwrap();
        assert_eq!(replica.anomalies.len(), 1);
        assert_eq!(replica.applied_height(), 1);
    }

    #[test]
    fn dump_is_stable_and_one_line_per_block() {
        let mut ledger = LocalLedger::new("hospital-1");
        for i in 0..4 {
            ledger.submit(sample_tx(i, TxKind::Registration)).unwrap();
            ledger.seal();
        }
        let dump = ledger.chain().dump();
        assert_eq!(dump.lines().count(), 4);
        for (i, line) in dump.lines().enumerate() {
            let parts: Vec<&str> = line.split(' ').collect();
            assert_eq!(parts.len(), 4);
            assert_eq!(parts[0], i.to_string());
            assert_eq!(parts[1].len(), 64);
            assert_eq!(parts[2].len(), 64);
            assert_eq!(parts[3], "1");
        }
        assert_eq!(dump, ledger.chain().dump());
    }

    #[test]
    fn payload_codecs_round_trip() {
        let keys = generate_keypair(b"k");
        let storage = StoragePayload {
            record_hash: content_hash(b"r", 1),
            patient_id: "p".into(),
            owner_pk: keys.public(),
            timestamp: 1,
        };
        assert_eq!(
            StoragePayload::from_bytes(&storage.to_bytes()).unwrap(),
            storage
        );
        let sharing = SharingPayload {
            user_pk: keys.public(),
            record_hash: content_hash(b"r", 2),
            owner_pk: keys.public(),
            timestamp: 2,
        };
        assert_eq!(
            SharingPayload::from_bytes(&sharing.to_bytes()).unwrap(),
            sharing
        );
        let fetch = InterMecPayload {
            patient_id: "p".into(),
            user_pk: keys.public(),
            requester_pk: keys.public(),
            timestamp: 3,
        };
        assert_eq!(
            InterMecPayload::from_bytes(&fetch.to_bytes()).unwrap(),
            fetch
        );
    }
}
