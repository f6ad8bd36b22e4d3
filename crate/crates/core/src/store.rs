//! Content-addressed ciphertext storage, one node per edge server.
//!
//! Every entry is keyed by the hash of its bytes and storage timestamp,
//! and the key is re-verified on every read, so tampering with stored
//! bytes is always detected. There is no global key-to-location index
//! anywhere in this module: location resolution is the contract
//! registry's job, and a node can only check its own map or ask its
//! peers directly.

use std::collections::BTreeMap;
use std::io::{self, Read, Write};

use thiserror::Error;

use crate::crypto::{content_hash, Ciphertext, ContentHash};

#[derive(Debug, Error, PartialEq)]
pub enum StoreError {
    #[error("hash {0} not found on this node or any reachable peer")]
    NotFound(ContentHash),
    #[error("stored bytes for {key} no longer match their hash")]
    Integrity { key: ContentHash },
    #[error("malformed record payload")]
    MalformedRecord,
}

/// A patient health record: raw sensor series plus analysis output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HealthRecord {
    pub patient_id: String,
    pub raw_data: Vec<u8>,
    pub analyzed_result: Vec<u8>,
}

impl HealthRecord {
    /// Canonical serialization: length-prefixed raw and analyzed parts.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(
            8 + self.patient_id.len() + 8 + self.raw_data.len() + 8 + self.analyzed_result.len(),
        );
        for part in [
            self.patient_id.as_bytes(),
            self.raw_data.as_slice(),
            self.analyzed_result.as_slice(),
        ] {
            out.extend_from_slice(&(part.len() as u64).to_be_bytes());
            out.extend_from_slice(part);
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StoreError> {
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8], StoreError> {
            if bytes.len() < pos + n {
                return Err(StoreError::MalformedRecord);
            }
            let s = &bytes[pos..pos + n];
            pos += n;
            Ok(s)
        };
        let mut parts = Vec::with_capacity(3);
        for _ in 0..3 {
            let mut len8 = [0u8; 8];
            len8.copy_from_slice(take(8)?);
            let len = u64::from_be_bytes(len8) as usize;
            if len > bytes.len() {
                return Err(StoreError::MalformedRecord);
            }
            parts.push(take(len)?.to_vec());
        }
        if pos != bytes.len() {
            return Err(StoreError::MalformedRecord);
        }
        let analyzed_result = parts.pop().expect("three parts");
        let raw_data = parts.pop().expect("three parts");
        let patient_id = String::from_utf8(parts.pop().expect("three parts"))
            .map_err(|_| StoreError::MalformedRecord)?;
        Ok(Self {
            patient_id,
            raw_data,
            analyzed_result,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct StoredEntry {
    timestamp: u64,
    bytes: Vec<u8>,
}

/// One storage node, co-located with a hospital's edge server.
#[derive(Debug, Clone, Default)]
pub struct StoreNode {
    pub node_id: String,
    entries: BTreeMap<ContentHash, StoredEntry>,
}

impl StoreNode {
    pub fn new(node_id: impl Into<String>) -> Self {
        Self {
            node_id: node_id.into(),
            entries: BTreeMap::new(),
        }
    }

    /// Store a ciphertext under the hash of (its bytes, timestamp).
    /// Idempotent: re-putting identical input changes nothing.
    pub fn put(&mut self, ct: &Ciphertext, timestamp: u64) -> ContentHash {
        let bytes = ct.to_bytes();
        self.put_bytes(bytes, timestamp)
    }

    fn put_bytes(&mut self, bytes: Vec<u8>, timestamp: u64) -> ContentHash {
        let hash = content_hash(&bytes, timestamp);
        self.entries
            .entry(hash)
            .or_insert(StoredEntry { timestamp, bytes });
        hash
    }

    /// Fetch from this node only, re-verifying content addressing.
    pub fn get_local(&self, hash: &ContentHash) -> Result<Ciphertext, StoreError> {
        let entry = self.entries.get(hash).ok_or(StoreError::NotFound(*hash))?;
        if content_hash(&entry.bytes, entry.timestamp) != *hash {
            return Err(StoreError::Integrity { key: *hash });
        }
        Ciphertext::from_bytes(&entry.bytes).map_err(|_| StoreError::Integrity { key: *hash })
    }

    pub fn contains(&self, hash: &ContentHash) -> bool {
        self.entries.contains_key(hash)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn keys(&self) -> impl Iterator<Item = &ContentHash> {
        self.entries.keys()
    }

    /// Flip one bit of a stored entry. Fault injection for integrity
    /// tests; returns false when the hash is absent.
    pub fn flip_stored_bit(&mut self, hash: &ContentHash, bit_index: usize) -> bool {
        match self.entries.get_mut(hash) {
            Some(entry) if !entry.bytes.is_empty() => {
                let bit = bit_index % (entry.bytes.len() * 8);
                entry.bytes[bit / 8] ^= 1 << (bit % 8);
                true
            }
            _ => false,
        }
    }

    /// Append-only snapshot: [32-byte hash][BE64 timestamp][BE64 length][body]
    /// per record, in hash order.
    pub fn write_snapshot<W: Write>(&self, w: &mut W) -> io::Result<()> {
        for (hash, entry) in &self.entries {
            w.write_all(&hash.0)?;
            w.write_all(&entry.timestamp.to_be_bytes())?;
            w.write_all(&(entry.bytes.len() as u64).to_be_bytes())?;
            w.write_all(&entry.bytes)?;
        }
        Ok(())
    }

    /// Rebuild a node from a snapshot, re-verifying every key.
    pub fn read_snapshot<R: Read>(node_id: impl Into<String>, r: &mut R) -> io::Result<Self> {
        let mut node = Self::new(node_id);
        let mut header = [0u8; 32 + 8 + 8];
        loop {
            match r.read_exact(&mut header) {
                Ok(()) => {}
                Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => break,
                Err(e) => return Err(e),
            }
            let mut hash = [0u8; 32];
            hash.copy_from_slice(&header[..32]);
            let timestamp = u64::from_be_bytes(header[32..40].try_into().unwrap());
            let len = u64::from_be_bytes(header[40..48].try_into().unwrap()) as usize;
            let mut bytes = vec![0u8; len];
            r.read_exact(&mut bytes)?;
            let key = ContentHash(hash);
            if content_hash(&bytes, timestamp) != key {
                return Err(io::Error::new(
                    io::ErrorKind::InvalidData,
                    StoreError::Integrity { key }.to_string(),
                ));
            }
            node.entries.insert(key, StoredEntry { timestamp, bytes });
        }
        Ok(node)
    }
}

/// When peers learn about new entries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplicationMode {
    /// Push every put to all peers immediately.
    Eager,
    /// Entries stay on the owning node until fetched; the default, so
    /// retrieval experiments see real cross-node traffic.
    #[default]
    Lazy,
}

/// A set of store nodes with full peer connectivity.
#[derive(Debug, Clone)]
pub struct StoreCluster {
    nodes: Vec<StoreNode>,
    pub replication: ReplicationMode,
}

/// Extra message hops for one cross-node fetch (request + response).
pub const PEER_FETCH_HOPS: u32 = 2;

impl StoreCluster {
    pub fn new(node_ids: &[&str], replication: ReplicationMode) -> Self {
        Self {
            nodes: node_ids.iter().map(|id| StoreNode::new(*id)).collect(),
            replication,
        }
    }

    pub fn node(&self, index: usize) -> &StoreNode {
        &self.nodes[index]
    }

    pub fn node_mut(&mut self, index: usize) -> &mut StoreNode {
        &mut self.nodes[index]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Put at `node`; under eager replication the entry is pushed to
    /// every peer as well.
    pub fn put(&mut self, node: usize, ct: &Ciphertext, timestamp: u64) -> ContentHash {
        let bytes = ct.to_bytes();
        let hash = self.nodes[node].put_bytes(bytes.clone(), timestamp);
        if self.replication == ReplicationMode::Eager {
            for (i, peer) in self.nodes.iter_mut().enumerate() {
                if i != node {
                    peer.put_bytes(bytes.clone(), timestamp);
                }
            }
        }
        hash
    }

    /// Fetch at `node`, falling back to peers. Returns the ciphertext
    /// and the number of extra message hops spent (0 when local).
    pub fn get(&self, node: usize, hash: &ContentHash) -> Result<(Ciphertext, u32), StoreError> {
        match self.nodes[node].get_local(hash) {
            Ok(ct) => return Ok((ct, 0)),
            Err(StoreError::Integrity { key }) => return Err(StoreError::Integrity { key }),
            Err(_) => {}
        }
        for (i, peer) in self.nodes.iter().enumerate() {
            if i == node {
                continue;
            }
            match peer.get_local(hash) {
                Ok(ct) => return Ok((ct, PEER_FETCH_HOPS)),
                Err(StoreError::Integrity { key }) => return Err(StoreError::Integrity { key }),
                Err(_) => {}
            }
        }
        Err(StoreError::NotFound(*hash))
    }

    /// Push everything `node` holds to all peers.
    pub fn replicate(&mut self, node: usize) {
        let entries: Vec<(u64, Vec<u8>)> = self.nodes[node]
            .entries
            .values()
            .map(|e| (e.timestamp, e.bytes.clone()))
            .collect();
        for (i, peer) in self.nodes.iter_mut().enumerate() {
            if i == node {
                continue;
            }
            for (timestamp, bytes) in &entries {
                peer.put_bytes(bytes.clone(), *timestamp);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::{encrypt, generate_keypair};
    use proptest::prelude::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_ciphertext(seed: u64, len: usize) -> Ciphertext {
        let keys = generate_keypair(&seed.to_be_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut payload = vec![0u8; len];
        rng.fill_bytes(&mut payload);
        encrypt(&payload, &keys.public(), &mut rng)
    }

    #[test]
    fn put_get_round_trip() {
        let mut node = StoreNode::new("hospital-1");
        let ct = sample_ciphertext(1, 256);
        let hash = node.put(&ct, 42);
        assert_eq!(node.get_local(&hash).unwrap(), ct);
    }

    #[test]
    fn put_is_idempotent() {
        let mut node = StoreNode::new("hospital-1");
        let ct = sample_ciphertext(2, 64);
        let h1 = node.put(&ct, 7);
        let h2 = node.put(&ct, 7);
        assert_eq!(h1, h2);
        assert_eq!(node.len(), 1);
    }

    #[test]
    fn five_megabyte_record_hashes_full_body() {
        let mut node = StoreNode::new("hospital-1");
        let ct = sample_ciphertext(3, 5 * 1024 * 1024);
        let hash = node.put(&ct, 9);
        assert_eq!(hash, content_hash(&ct.to_bytes(), 9));
        assert_eq!(node.get_local(&hash).unwrap(), ct);
    }

    #[test]
    fn unknown_hash_is_not_found() {
        let node = StoreNode::new("hospital-1");
        let missing = content_hash(b"nothing", 0);
        assert_eq!(node.get_local(&missing), Err(StoreError::NotFound(missing)));
    }

    #[test]
    fn tampered_bytes_fail_read_time_check() {
        let mut node = StoreNode::new("hospital-1");
        let ct = sample_ciphertext(4, 512);
        let hash = node.put(&ct, 11);
        assert!(node.flip_stored_bit(&hash, 1000));
        assert_eq!(
            node.get_local(&hash),
            Err(StoreError::Integrity { key: hash })
        );
    }

    #[test]
    fn peer_fetch_costs_two_hops() {
        let mut cluster = StoreCluster::new(&["a", "b", "c"], ReplicationMode::Lazy);
        let ct = sample_ciphertext(5, 128);
        let hash = cluster.put(0, &ct, 3);
        let (got, hops) = cluster.get(1, &hash).unwrap();
        assert_eq!(got, ct);
        assert_eq!(hops, PEER_FETCH_HOPS);
        let (_, local_hops) = cluster.get(0, &hash).unwrap();
        assert_eq!(local_hops, 0);
    }

    #[test]
    fn eager_replication_serves_peers_locally() {
        let mut cluster = StoreCluster::new(&["a", "b", "c"], ReplicationMode::Eager);
        let ct = sample_ciphertext(6, 128);
        let hash = cluster.put(0, &ct, 3);
        for node in 0..3 {
            let (got, hops) = cluster.get(node, &hash).unwrap();
            assert_eq!(got, ct);
            assert_eq!(hops, 0);
        }
    }

    #[test]
    fn replication_round_converges_key_sets() {
        let mut cluster = StoreCluster::new(&["a", "b", "c"], ReplicationMode::Lazy);
        for seed in 0..4 {
            let ct = sample_ciphertext(seed, 64);
            cluster.put(seed as usize % 3, &ct, seed);
        }
        for node in 0..3 {
            cluster.replicate(node);
        }
        let reference: Vec<_> = cluster.node(0).keys().cloned().collect();
        for node in 1..3 {
            let keys: Vec<_> = cluster.node(node).keys().cloned().collect();
            assert_eq!(keys, reference);
        }
    }

    #[test]
    fn empty_store_replicates_to_empty() {
        let mut cluster = StoreCluster::new(&["a", "b"], ReplicationMode::Lazy);
        cluster.replicate(0);
        assert!(cluster.node(1).is_empty());
    }

    #[test]
    fn snapshot_round_trips_bit_exactly() {
        let mut node = StoreNode::new("hospital-1");
        for seed in 0..5 {
            node.put(&sample_ciphertext(seed, 64 + seed as usize * 17), seed);
        }
        let mut buf = Vec::new();
        node.write_snapshot(&mut buf).unwrap();
        let restored = StoreNode::read_snapshot("hospital-1", &mut buf.as_slice()).unwrap();
        assert_eq!(restored.entries, node.entries);

        let mut buf2 = Vec::new();
        restored.write_snapshot(&mut buf2).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn snapshot_rejects_corrupted_body() {
        let mut node = StoreNode::new("hospital-1");
        node.put(&sample_ciphertext(9, 64), 1);
        let mut buf = Vec::new();
        node.write_snapshot(&mut buf).unwrap();
        let last = buf.len() - 1;
        buf[last] ^= 0xff;
        assert!(StoreNode::read_snapshot("x", &mut buf.as_slice()).is_err());
    }

    #[test]
    fn record_serialization_round_trips() {
        let record = HealthRecord {
            patient_id: "patient-5".into(),
            raw_data: vec![1, 2, 3, 4, 5],
            analyzed_result: vec![9, 9],
        };
        assert_eq!(
            HealthRecord::from_bytes(&record.to_bytes()).unwrap(),
            record
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn record_round_trip_arbitrary(pid in "[a-z0-9-]{1,16}",
                                       raw in prop::collection::vec(any::<u8>(), 0..256),
                                       analyzed in prop::collection::vec(any::<u8>(), 0..64)) {
            let record = HealthRecord { patient_id: pid, raw_data: raw, analyzed_result: analyzed };
            prop_assert_eq!(HealthRecord::from_bytes(&record.to_bytes()).unwrap(), record);
        }

        #[test]
        fn stored_key_always_matches_content(seed in any::<u64>(), len in 1usize..2048, ts in any::<u64>()) {
            let mut node = StoreNode::new("n");
            let ct = sample_ciphertext(seed, len);
            let hash = node.put(&ct, ts);
            prop_assert_eq!(hash, content_hash(&ct.to_bytes(), ts));
            prop_assert!(node.get_local(&hash).is_ok());
        }
    }
}
