//! The simulated ledger: transactions, pools, blocks and latency metrics.
//!
//! `K` nodes each hold a local copy of the chain; the first `M` of them are
//! block producers and additionally hold a transaction pool. Producers take
//! turns proposing blocks; a slot whose producer is offline (or has nothing
//! to pack) is a missed cycle and the rotation simply moves on.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;
use core::fmt;

use crate::consensus::{ConsensusOutcome, ProtocolId};
use crate::time::SimTime;

/// Index of a node; producers are the subset `[0, M)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct NodeId(pub u16);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

pub type TxId = u64;

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Transaction {
    pub id: TxId,
    pub size_bytes: u32,
    pub created_at: SimTime,
    pub origin: NodeId,
}

/// Consensus message kinds recorded in block histories.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Phase {
    Proposal,
    Prepare,
    Commit,
    Ack,
    Certificate,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Proposal => "proposal",
            Phase::Prepare => "prepare",
            Phase::Commit => "commit",
            Phase::Ack => "ack",
            Phase::Certificate => "certificate",
        }
    }
}

/// One delivered consensus message.
#[derive(Clone, Debug, PartialEq)]
pub struct MessageRecord {
    pub sender: NodeId,
    pub receiver: NodeId,
    pub phase: Phase,
    pub sent_at: SimTime,
    pub received_at: SimTime,
}

/// The timestamped history of one consensus round, stored in the block's
/// extra-data field. `participants` is the set of producers that sent at
/// least one message during the round.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConsensusHistory {
    pub messages: Vec<MessageRecord>,
    pub participants: BTreeSet<NodeId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block {
    pub height: u64,
    pub producer: NodeId,
    pub txs: Vec<Transaction>,
    pub proposed_at: SimTime,
    pub committed_at: SimTime,
    pub protocol: ProtocolId,
    pub history: ConsensusHistory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainError {
    /// The latency formula divides by the transaction count.
    EmptyBlock,
}

impl fmt::Display for ChainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChainError::EmptyBlock => write!(f, "block carries no transactions"),
        }
    }
}

impl Block {
    /// Total latency over the block's transactions, in exact milliseconds.
    pub fn total_latency_ms(&self) -> u64 {
        self.txs
            .iter()
            .map(|tx| self.committed_at - tx.created_at)
            .sum()
    }

    /// Average transaction latency in seconds: the per-transaction mean of
    /// `committed_at - created_at`.
    pub fn avg_latency_secs(&self) -> Result<f64, ChainError> {
        if self.txs.is_empty() {
            return Err(ChainError::EmptyBlock);
        }
        Ok(self.total_latency_ms() as f64 / self.txs.len() as f64 / 1000.0)
    }
}

/// Transaction-weighted mean latency in seconds over blocks committed in
/// `[window.0, window.1)`. `None` means no blocks committed in the window.
pub fn window_latency(blocks: &[Block], window: (SimTime, SimTime)) -> Option<f64> {
    let mut total_ms = 0u64;
    let mut count = 0u64;
    for block in blocks {
        if block.committed_at >= window.0 && block.committed_at < window.1 {
            total_ms += block.total_latency_ms();
            count += block.txs.len() as u64;
        }
    }
    if count == 0 {
        None
    } else {
        Some(total_ms as f64 / count as f64 / 1000.0)
    }
}

/// Scheduled producer for a rotation slot: round-robin over the `M`
/// producers, driven by slot count so a missed cycle moves the rotation on
/// rather than retrying the same producer.
pub fn producer_for_round(round: u64, producers: u16) -> NodeId {
    debug_assert!(producers >= 1);
    NodeId((round % producers as u64) as u16)
}

/// FIFO transaction pool ordered by `(created_at, id)`.
#[derive(Clone, Debug, Default)]
pub struct TransactionPool {
    pending: BTreeMap<(SimTime, TxId), Transaction>,
}

impl TransactionPool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, tx: Transaction) {
        self.pending.insert((tx.created_at, tx.id), tx);
    }

    pub fn remove(&mut self, created_at: SimTime, id: TxId) -> bool {
        self.pending.remove(&(created_at, id)).is_some()
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn contains(&self, created_at: SimTime, id: TxId) -> bool {
        self.pending.contains_key(&(created_at, id))
    }

    /// The `n` oldest pending transactions, oldest first.
    pub fn oldest(&self, n: usize) -> Vec<Transaction> {
        self.pending.values().take(n).cloned().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transaction> {
        self.pending.values()
    }
}

/// A proposal as it enters consensus.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockProposal {
    pub round: u64,
    pub height: u64,
    pub producer: NodeId,
    pub txs: Vec<Transaction>,
    pub proposed_at: SimTime,
    /// Header plus payload bytes; drives the dissemination delay.
    pub byte_size: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MissReason {
    Offline,
    EmptyPool,
    ConsensusFailed,
}

impl MissReason {
    pub fn as_str(self) -> &'static str {
        match self {
            MissReason::Offline => "offline",
            MissReason::EmptyPool => "empty-pool",
            MissReason::ConsensusFailed => "consensus-failed",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MissedCycle {
    pub round: u64,
    pub at: SimTime,
    pub producer: NodeId,
    pub reason: MissReason,
}

#[derive(Debug)]
pub enum ProposalOutcome {
    Proposal(BlockProposal),
    Missed(MissReason),
}

/// Ledger-side state of one run: per-producer pools, the committed chain
/// and each node's sync point into it.
#[derive(Debug)]
pub struct ChainState {
    nodes: u16,
    producers: u16,
    pools: Vec<TransactionPool>,
    chain: Vec<Block>,
    node_heights: Vec<u64>,
    committed: BTreeSet<TxId>,
    missed: Vec<MissedCycle>,
}

impl ChainState {
    pub fn new(nodes: u16, producers: u16) -> Self {
        assert!(producers >= 1 && producers <= nodes);
        ChainState {
            nodes,
            producers,
            pools: (0..producers).map(|_| TransactionPool::new()).collect(),
            chain: Vec::new(),
            node_heights: alloc::vec![0; nodes as usize],
            committed: BTreeSet::new(),
            missed: Vec::new(),
        }
    }

    pub fn producers(&self) -> u16 {
        self.producers
    }

    pub fn nodes(&self) -> u16 {
        self.nodes
    }

    pub fn chain(&self) -> &[Block] {
        &self.chain
    }

    pub fn missed(&self) -> &[MissedCycle] {
        &self.missed
    }

    pub fn pools(&self) -> &[TransactionPool] {
        &self.pools
    }

    pub fn node_heights(&self) -> &[u64] {
        &self.node_heights
    }

    pub fn height(&self) -> u64 {
        self.chain.len() as u64
    }

    pub fn is_committed(&self, id: TxId) -> bool {
        self.committed.contains(&id)
    }

    /// Deliver a broadcast transaction into one producer's pool. Already
    /// committed transactions are dropped.
    pub fn deliver(&mut self, producer: NodeId, tx: Transaction) {
        debug_assert!(producer.0 < self.producers);
        if self.committed.contains(&tx.id) {
            return;
        }
        self.pools[producer.index()].insert(tx);
    }

    /// One proposal attempt at the producer's slot. Packs the oldest pooled
    /// transactions up to the count and byte caps (always at least one), or
    /// records a missed cycle when the producer is offline or has nothing
    /// to pack.
    #[allow(clippy::too_many_arguments)]
    pub fn attempt_block(
        &mut self,
        round: u64,
        producer: NodeId,
        at: SimTime,
        online: bool,
        max_txs: usize,
        max_block_bytes: u32,
        header_bytes: u32,
    ) -> ProposalOutcome {
        if !online {
            self.record_missed(round, at, producer, MissReason::Offline);
            return ProposalOutcome::Missed(MissReason::Offline);
        }
        let pool = &self.pools[producer.index()];
        if pool.is_empty() {
            self.record_missed(round, at, producer, MissReason::EmptyPool);
            return ProposalOutcome::Missed(MissReason::EmptyPool);
        }
        let mut txs = Vec::new();
        let mut byte_size = header_bytes as u64;
        for tx in pool.iter() {
            if txs.len() >= max_txs {
                break;
            }
            if !txs.is_empty() && byte_size + tx.size_bytes as u64 > max_block_bytes as u64 {
                break;
            }
            byte_size += tx.size_bytes as u64;
            txs.push(tx.clone());
        }
        ProposalOutcome::Proposal(BlockProposal {
            round,
            height: self.height(),
            producer,
            txs,
            proposed_at: at,
            byte_size,
        })
    }

    pub fn record_missed(&mut self, round: u64, at: SimTime, producer: NodeId, reason: MissReason) {
        self.missed.push(MissedCycle {
            round,
            at,
            producer,
            reason,
        });
    }

    /// Apply a consensus outcome. A committed block is appended to every
    /// online node's ledger and its transactions leave all pools; a failed
    /// round changes nothing (the transactions stay pooled).
    pub fn commit_block<F>(
        &mut self,
        proposal: BlockProposal,
        outcome: ConsensusOutcome,
        protocol: ProtocolId,
        online_at_commit: F,
    ) -> Option<&Block>
    where
        F: Fn(NodeId) -> bool,
    {
        if !outcome.committed {
            return None;
        }
        for pool in &mut self.pools {
            for tx in &proposal.txs {
                pool.remove(tx.created_at, tx.id);
            }
        }
        for tx in &proposal.txs {
            self.committed.insert(tx.id);
        }
        let block = Block {
            height: proposal.height,
            producer: proposal.producer,
            txs: proposal.txs,
            proposed_at: proposal.proposed_at,
            committed_at: outcome.commit_time,
            protocol,
            history: outcome.history,
        };
        self.chain.push(block);
        let tip = self.chain.len() as u64;
        for node in 0..self.nodes {
            if online_at_commit(NodeId(node)) {
                self.node_heights[node as usize] = tip;
            }
        }
        Some(self.chain.last().unwrap())
    }

    /// Ledger catch-up for a node returning from an outage.
    pub fn resync(&mut self, node: NodeId) {
        self.node_heights[node.index()] = self.chain.len() as u64;
    }

    pub fn into_chain(self) -> Vec<Block> {
        self.chain
    }
}
