//! Three-phase quorum consensus over the global chain.
//!
//! n = 3f+1 nodes; a static round-robin leader proposes, everyone
//! exchanges prepare then commit votes, and a block commits once 2f+1
//! matching signed votes arrive in each phase. Nodes are isolated
//! state machines; [`pbft_round`] routes the messages between them
//! synchronously and counts every one sent. View changes are out of
//! scope: a silent leader simply stalls the batch.

use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::{sign, verify, ContentHash, KeyPair, PublicKey, Signature};

use super::{Block, Chain, CommitVote, LedgerError, LedgerTx};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeBehavior {
    Honest,
    /// Sends nothing at all (a crashed or partitioned node).
    Silent,
    /// Votes for the real block to half its peers and for a fabricated
    /// one to the rest.
    Equivocate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseTag {
    Prepare,
    Commit,
}

/// Canonical bytes a vote signs: phase, view, height, header hash.
pub fn vote_bytes(phase: PhaseTag, view: u64, height: u64, header: &ContentHash) -> Vec<u8> {
    let mut out = Vec::with_capacity(1 + 8 + 8 + 32);
    out.push(match phase {
        PhaseTag::Prepare => 1,
        PhaseTag::Commit => 2,
    });
    out.extend_from_slice(&view.to_be_bytes());
    out.extend_from_slice(&height.to_be_bytes());
    out.extend_from_slice(&header.0);
    out
}

#[derive(Debug, Clone)]
pub struct Vote {
    pub phase: PhaseTag,
    pub view: u64,
    pub height: u64,
    pub header: ContentHash,
    pub voter: usize,
    pub signature: Signature,
}

/// Per-(view, height) progress.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Phase {
    PrePrepared,
    Prepared,
    Committed,
}

/// One consensus node: key pair, peer directory, vote tallies, chain.
#[derive(Debug)]
pub struct PbftNode {
    pub id: String,
    pub index: usize,
    keys: KeyPair,
    peer_pks: Vec<PublicKey>,
    pub fault_budget: usize,
    pub behavior: NodeBehavior,
    pub view: u64,
    phase: BTreeMap<(u64, u64), Phase>,
    /// (view, height, header) -> voter set, per phase.
    prepare_tally: BTreeMap<(u64, u64, ContentHash), BTreeSet<usize>>,
    commit_tally: BTreeMap<(u64, u64, ContentHash), BTreeSet<usize>>,
    commit_votes_seen: BTreeMap<(u64, u64, ContentHash), Vec<CommitVote>>,
    proposal: BTreeMap<(u64, u64), Block>,
    pub chain: Chain,
}

impl PbftNode {
    pub fn new(
        id: impl Into<String>,
        index: usize,
        keys: KeyPair,
        peer_pks: Vec<PublicKey>,
        fault_budget: usize,
    ) -> Self {
        Self {
            id: id.into(),
            index,
            keys,
            peer_pks,
            fault_budget,
            behavior: NodeBehavior::Honest,
            view: 0,
            phase: BTreeMap::new(),
            prepare_tally: BTreeMap::new(),
            commit_tally: BTreeMap::new(),
            commit_votes_seen: BTreeMap::new(),
            proposal: BTreeMap::new(),
            chain: Chain::new(),
        }
    }

    pub fn quorum(&self) -> usize {
        2 * self.fault_budget + 1
    }

    pub fn public(&self) -> PublicKey {
        self.keys.public()
    }

    fn sign_vote(&self, phase: PhaseTag, height: u64, header: &ContentHash) -> Vote {
        Vote {
            phase,
            view: self.view,
            height,
            header: *header,
            voter: self.index,
            signature: sign(&vote_bytes(phase, self.view, height, header), &self.keys),
        }
    }

    fn vote_is_valid(&self, vote: &Vote) -> bool {
        self.peer_pks
            .get(vote.voter)
            .map(|pk| {
                verify(
                    &vote.signature,
                    &vote_bytes(vote.phase, vote.view, vote.height, &vote.header),
                    pk,
                )
            })
            .unwrap_or(false)
    }

    /// Leader builds the proposal for its current chain tip.
    pub fn propose(&mut self, transactions: Vec<LedgerTx>) -> Block {
        let block = Block {
            height: self.chain.height(),
            prev_hash: self.chain.tip_hash(),
            tx_root: Block::root_of(&transactions),
            transactions,
            proposer: self.id.clone(),
            commit_certificate: Vec::new(),
        };
        self.accept_pre_prepare(block.clone(), self.index);
        block
    }

    /// Handle a pre-prepare; returns this node's prepare vote if it
    /// accepts the proposal.
    pub fn handle_pre_prepare(&mut self, block: Block, leader: usize) -> Option<Vote> {
        if self.behavior == NodeBehavior::Silent {
            return None;
        }
        if block.height != self.chain.height()
            || block.prev_hash != self.chain.tip_hash()
            || block.tx_root != Block::root_of(&block.transactions)
        {
            return None;
        }
        self.accept_pre_prepare(block, leader)
    }

    fn accept_pre_prepare(&mut self, block: Block, leader: usize) -> Option<Vote> {
        let key = (self.view, block.height);
        let header = block.header_hash();
        self.phase.entry(key).or_insert(Phase::PrePrepared);
        self.proposal.insert(key, block);
        // The leader's pre-prepare doubles as its prepare vote.
        self.prepare_tally
            .entry((key.0, key.1, header))
            .or_default()
            .insert(leader);
        let own = self.sign_vote(PhaseTag::Prepare, key.1, &header);
        self.note_prepare(&own);
        Some(own)
    }

    fn note_prepare(&mut self, vote: &Vote) {
        self.prepare_tally
            .entry((vote.view, vote.height, vote.header))
            .or_default()
            .insert(vote.voter);
    }

    /// Handle a prepare vote; returns a commit vote when this node
    /// reaches the prepared quorum for its accepted proposal.
    pub fn handle_prepare(&mut self, vote: Vote) -> Option<Vote> {
        if self.behavior == NodeBehavior::Silent || !self.vote_is_valid(&vote) {
            return None;
        }
        self.note_prepare(&vote);
        let key = (vote.view, vote.height);
        let Some(proposal) = self.proposal.get(&key) else {
            return None;
        };
        let header = proposal.header_hash();
        if self.phase.get(&key) == Some(&Phase::PrePrepared)
            && self
                .prepare_tally
                .get(&(key.0, key.1, header))
                .map(|s| s.len())
                .unwrap_or(0)
                >= self.quorum()
        {
            self.phase.insert(key, Phase::Prepared);
            let own = self.sign_vote(PhaseTag::Commit, key.1, &header);
            self.note_commit(&own);
            return Some(own);
        }
        None
    }

    fn note_commit(&mut self, vote: &Vote) {
        let key = (vote.view, vote.height, vote.header);
        let newly = self
            .commit_tally
            .entry(key)
            .or_default()
            .insert(vote.voter);
        if newly {
            if let Some(pk) = self.peer_pks.get(vote.voter) {
                self.commit_votes_seen.entry(key).or_default().push(CommitVote {
                    voter: format!("node-{}", vote.voter),
                    voter_pk: *pk,
                    signature: vote.signature,
                });
            }
        }
    }

    /// Handle a commit vote; appends the block on quorum and returns it.
    pub fn handle_commit(&mut self, vote: Vote) -> Option<Block> {
        if self.behavior == NodeBehavior::Silent || !self.vote_is_valid(&vote) {
            return None;
        }
        self.note_commit(&vote);
        let key = (vote.view, vote.height);
        let proposal = self.proposal.get(&key)?;
        let header = proposal.header_hash();
        let tally_key = (key.0, key.1, header);
        if self.phase.get(&key) == Some(&Phase::Prepared)
            && self
                .commit_tally
                .get(&tally_key)
                .map(|s| s.len())
                .unwrap_or(0)
                >= self.quorum()
        {
            self.phase.insert(key, Phase::Committed);
            let mut block = self.proposal.remove(&key).expect("proposal present");
            block.commit_certificate = self
                .commit_votes_seen
                .get(&tally_key)
                .cloned()
                .unwrap_or_default();
            self.chain.append(block).expect("quorum block extends tip");
            return Some(self.chain.blocks().last().cloned().expect("just appended"));
        }
        None
    }
}

/// Message and commit accounting for one round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundStats {
    pub messages: usize,
    pub committed_nodes: usize,
}

/// Run one full three-phase round over `nodes` for `batch`.
///
/// The leader is chosen round-robin by height. Every honest node ends
/// the round with the identical block appended, or the round reports
/// `NoQuorum` and no honest node commits anything.
pub fn pbft_round(
    nodes: &mut [PbftNode],
    batch: Vec<LedgerTx>,
) -> Result<(Block, RoundStats), LedgerError> {
    let n = nodes.len();
    let mut stats = RoundStats::default();
    let height = nodes
        .iter()
        .filter(|node| node.behavior == NodeBehavior::Honest)
        .map(|node| node.chain.height())
        .max()
        .unwrap_or(0);
    let leader = (height % n as u64) as usize;

    if nodes[leader].behavior != NodeBehavior::Honest {
        return Err(LedgerError::NoQuorum);
    }

    // Phase 1: pre-prepare. The leader's accept doubles as its prepare
    // vote, both at itself (inside propose) and at every receiver.
    let block = nodes[leader].propose(batch);
    let mut prepares: Vec<(usize, Vote)> = Vec::new();
    for i in 0..n {
        if i == leader {
            continue;
        }
        stats.messages += 1; // pre-prepare delivery
        if let Some(vote) = nodes[i].handle_pre_prepare(block.clone(), leader) {
            prepares.push((i, vote));
        }
    }

    // Phase 2: prepare, all-to-all.
    let mut commits: Vec<(usize, Vote)> = Vec::new();
    // The leader also reaches quorum through delivered prepares.
    let deliveries = route_votes(nodes, &prepares, &mut stats);
    for (recipient, vote) in deliveries {
        if let Some(commit_vote) = nodes[recipient].handle_prepare(vote) {
            commits.push((recipient, commit_vote));
        }
    }

    // Phase 3: commit, all-to-all.
    let mut committed: Option<Block> = None;
    let deliveries = route_votes(nodes, &commits, &mut stats);
    for (recipient, vote) in deliveries {
        if let Some(block) = nodes[recipient].handle_commit(vote) {
            committed.get_or_insert(block);
        }
    }

    stats.committed_nodes = nodes
        .iter()
        .filter(|node| node.chain.height() == height + 1)
        .count();

    match committed {
        Some(block) => Ok((block, stats)),
        None => Err(LedgerError::NoQuorum),
    }
}

/// Expand per-sender votes into per-recipient deliveries, applying each
/// sender's behavior. Deliveries are ordered (sender, recipient) so the
/// exchange is deterministic.
fn route_votes(
    nodes: &[PbftNode],
    votes: &[(usize, Vote)],
    stats: &mut RoundStats,
) -> Vec<(usize, Vote)> {
    let n = nodes.len();
    let mut deliveries = Vec::new();
    for (sender, vote) in votes {
        match nodes[*sender].behavior {
            NodeBehavior::Silent => {}
            NodeBehavior::Honest => {
                for recipient in 0..n {
                    if recipient != *sender {
                        stats.messages += 1;
                        deliveries.push((recipient, vote.clone()));
                    }
                }
            }
            NodeBehavior::Equivocate => {
                // Real vote to the lower half, fabricated header to the rest.
                let fake_header =
                    crate::crypto::content_hash(b"equivocation", vote.height);
                let fake = Vote {
                    header: fake_header,
                    signature: sign(
                        &vote_bytes(vote.phase, vote.view, vote.height, &fake_header),
                        &nodes[*sender].keys,
                    ),
                    ..vote.clone()
                };
                for recipient in 0..n {
                    if recipient == *sender {
                        continue;
                    }
                    stats.messages += 1;
                    if recipient < n / 2 {
                        deliveries.push((recipient, vote.clone()));
                    } else {
                        deliveries.push((recipient, fake.clone()));
                    }
                }
            }
        }
    }
    deliveries
}

/// Build an n-node cluster keyed from a seed label. Requires n = 3f+1.
pub fn make_cluster(n: usize, fault_budget: usize, seed: &str) -> Vec<PbftNode> {
    assert_eq!(n, 3 * fault_budget + 1, "cluster size must be 3f+1");
    let keys: Vec<KeyPair> = (0..n)
        .map(|i| crate::crypto::generate_keypair(format!("{seed}/node-{i}").as_bytes()))
        .collect();
    let pks: Vec<PublicKey> = keys.iter().map(|k| k.public()).collect();
    keys.into_iter()
        .enumerate()
        .map(|(i, k)| PbftNode::new(format!("node-{i}"), i, k, pks.clone(), fault_budget))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::{SharingPayload, TxKind};
    use super::*;
    use crate::crypto::{content_hash, generate_keypair};

    fn batch(len: usize, seed: u64) -> Vec<LedgerTx> {
        (0..len)
            .map(|i| {
                let keys = generate_keypair(format!("tx-{seed}-{i}").as_bytes());
                let payload = SharingPayload {
                    user_pk: keys.public(),
                    record_hash: content_hash(&i.to_be_bytes(), seed),
                    owner_pk: keys.public(),
                    timestamp: seed,
                }
                .to_bytes();
                LedgerTx::signed(TxKind::Sharing, payload, &keys, seed)
            })
            .collect()
    }

    #[test]
    fn four_nodes_one_silent_still_commits() {
        let mut nodes = make_cluster(4, 1, "a");
        nodes[2].behavior = NodeBehavior::Silent;
        let (block, stats) = pbft_round(&mut nodes, batch(3, 1)).unwrap();
        assert_eq!(block.height, 0);
        assert_eq!(stats.committed_nodes, 3);
        for node in nodes.iter().filter(|n| n.behavior == NodeBehavior::Honest) {
            assert_eq!(node.chain.height(), 1);
            assert_eq!(node.chain.blocks()[0].header_hash(), block.header_hash());
        }
    }

    #[test]
    fn two_silent_nodes_lose_liveness_but_not_safety() {
        let mut nodes = make_cluster(4, 1, "b");
        nodes[1].behavior = NodeBehavior::Silent;
        nodes[2].behavior = NodeBehavior::Silent;
        assert_eq!(
            pbft_round(&mut nodes, batch(2, 2)).unwrap_err(),
            LedgerError::NoQuorum
        );
        for node in &nodes {
            assert_eq!(node.chain.height(), 0);
        }
    }

    #[test]
    fn equivocating_non_leader_cannot_split_honest_nodes() {
        let mut nodes = make_cluster(4, 1, "c");
        nodes[3].behavior = NodeBehavior::Equivocate; // leader is node 0 at height 0
        let (block, _) = pbft_round(&mut nodes, batch(4, 3)).unwrap();
        for node in nodes.iter().take(3) {
            assert_eq!(node.chain.height(), 1);
            assert_eq!(node.chain.blocks()[0].header_hash(), block.header_hash());
        }
    }

    #[test]
    fn commit_certificate_carries_a_quorum() {
        let mut nodes = make_cluster(4, 1, "d");
        let (block, _) = pbft_round(&mut nodes, batch(1, 4)).unwrap();
        assert!(block.verify_commit_certificate(0, 3));
        let mut weak = block.clone();
        weak.commit_certificate.truncate(1);
        assert!(!weak.verify_commit_certificate(0, 3));
    }

    #[test]
    fn leaders_rotate_by_height() {
        let mut nodes = make_cluster(4, 1, "e");
        for round in 0..4 {
            let (block, _) = pbft_round(&mut nodes, batch(1, 10 + round)).unwrap();
            assert_eq!(block.proposer, format!("node-{}", block.height % 4));
        }
        for node in &nodes {
            node.chain.verify_integrity().unwrap();
            assert_eq!(node.chain.height(), 4);
        }
    }

    #[test]
    fn message_count_is_quadratic_not_more() {
        let mut nodes = make_cluster(4, 1, "f");
        let (_, stats) = pbft_round(&mut nodes, batch(1, 20)).unwrap();
        // pre-prepare: n-1; prepares: (n-1)^2; commits: n(n-1) at most
        let n = 4;
        assert!(stats.messages <= (n - 1) + (n - 1) * (n - 1) + n * (n - 1));
        assert!(stats.messages >= (n - 1) * 2);
    }

    #[test]
    fn silent_leader_stalls_the_round() {
        let mut nodes = make_cluster(4, 1, "g");
        nodes[0].behavior = NodeBehavior::Silent; // leader at height 0
        assert_eq!(
            pbft_round(&mut nodes, batch(1, 30)).unwrap_err(),
            LedgerError::NoQuorum
        );
    }
}
