//! Message-level models of the two consensus protocols.
//!
//! Both protocols run over the simulated network among the `n` producers
//! and are computed as a deterministic message cascade:
//!
//! - The proposal is disseminated to all online replicas as one barrier:
//!   every replica receives the block at the leader's send time plus the
//!   slowest online per-link block transfer. Voting starts on complete
//!   blocks, which keeps the two protocols comparable on the same inputs.
//! - Control messages (prepare, commit, ack, certificate) are per-link
//!   unicasts. A multicast serializes at the sender: the k-th copy goes on
//!   the wire only after the first k-1 copies, so all-to-all rounds pay for
//!   their quadratic message count.
//! - A node must be online at the send instant to send and at the arrival
//!   instant to receive; messages to offline nodes are dropped.
//!
//! PBFT commits a block at the instant the quorum-th distinct node holds a
//! local commit certificate. The fast-path protocol commits once the
//! quorum-th node holds the leader's commit certificate; when the leader is
//! missing an ack at the timeout it falls back to the PBFT prepare/commit
//! phases, having burned the fast-path window.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::fmt;

use crate::chain::{BlockProposal, ConsensusHistory, MessageRecord, NodeId, Phase};
use crate::network::{wire_time_ms, FailureSchedule, NetworkSchedule};
use crate::time::SimTime;

/// The optimizer's whole action space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum ProtocolId {
    Pbft,
    Bigfoot,
}

impl ProtocolId {
    pub const ALL: [ProtocolId; 2] = [ProtocolId::Pbft, ProtocolId::Bigfoot];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolId::Pbft => "pbft",
            ProtocolId::Bigfoot => "bigfoot",
        }
    }

    pub fn parse(s: &str) -> Option<ProtocolId> {
        match s {
            "pbft" | "PBFT" => Some(ProtocolId::Pbft),
            "bigfoot" | "BIGFOOT" => Some(ProtocolId::Bigfoot),
            _ => None,
        }
    }
}

impl fmt::Display for ProtocolId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConsensusConfig {
    /// Producer count `n`; tolerates `f = floor((n-1)/3)` faults.
    pub producers: u16,
    pub control_msg_bytes: u32,
    /// The fast path must hold all acks within this window.
    pub fast_path_timeout_ms: u64,
    /// A round that cannot reach quorum fails after
    /// `view_timeout_factor * fast_path_timeout_ms`.
    pub view_timeout_factor: u64,
}

impl ConsensusConfig {
    pub fn new(producers: u16, control_msg_bytes: u32, fast_path_timeout_ms: u64) -> Self {
        assert!(producers >= 1);
        let cfg = ConsensusConfig {
            producers,
            control_msg_bytes,
            fast_path_timeout_ms,
            view_timeout_factor: 4,
        };
        // n >= 3f + 1 holds by construction of f.
        debug_assert!(cfg.producers >= 3 * cfg.max_faults() + 1);
        cfg
    }

    pub fn max_faults(&self) -> u16 {
        (self.producers - 1) / 3
    }

    pub fn quorum(&self) -> u16 {
        2 * self.max_faults() + 1
    }

    pub fn view_timeout_ms(&self) -> u64 {
        self.view_timeout_factor * self.fast_path_timeout_ms
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusOutcome {
    pub committed: bool,
    pub commit_time: SimTime,
    pub used_fallback: bool,
    pub history: ConsensusHistory,
}

/// Read-only view of the network a round runs over.
#[derive(Clone, Copy)]
pub struct NetContext<'a> {
    pub net: &'a NetworkSchedule,
    pub failures: &'a FailureSchedule,
    pub propagation_ms: u64,
}

impl<'a> NetContext<'a> {
    fn online(&self, node: NodeId, t: SimTime) -> bool {
        self.failures.is_online(node, t)
    }

    fn wire(&self, bytes: u64, from: NodeId, to: NodeId, t: SimTime) -> u64 {
        wire_time_ms(bytes, self.net.speed_at_clamped(from, to, t))
            .expect("schedule speeds are validated positive")
    }
}

struct Cascade<'a> {
    cfg: &'a ConsensusConfig,
    ctx: NetContext<'a>,
    history: Vec<MessageRecord>,
}

impl<'a> Cascade<'a> {
    fn new(cfg: &'a ConsensusConfig, ctx: NetContext<'a>) -> Self {
        Cascade {
            cfg,
            ctx,
            history: Vec::new(),
        }
    }

    fn participants(&self) -> Vec<NodeId> {
        (0..self.cfg.producers).map(NodeId).collect()
    }

    /// Serialized control multicast to every other participant in node-id
    /// order. Returns delivered `(receiver, arrival)` pairs.
    fn multicast(
        &mut self,
        sender: NodeId,
        start: SimTime,
        phase: Phase,
    ) -> Vec<(NodeId, SimTime)> {
        let mut delivered = Vec::new();
        let mut nic_free = start;
        for receiver in self.participants() {
            if receiver == sender {
                continue;
            }
            if !self.ctx.online(sender, nic_free) {
                break;
            }
            let wire = self.ctx.wire(
                self.cfg.control_msg_bytes as u64,
                sender,
                receiver,
                nic_free,
            );
            let sent_at = nic_free;
            let received_at = nic_free + wire + self.ctx.propagation_ms;
            nic_free += wire;
            if self.ctx.online(receiver, received_at) {
                self.history.push(MessageRecord {
                    sender,
                    receiver,
                    phase,
                    sent_at,
                    received_at,
                });
                delivered.push((receiver, received_at));
            }
        }
        delivered
    }

    /// One control message to a single destination.
    fn send(
        &mut self,
        sender: NodeId,
        receiver: NodeId,
        at: SimTime,
        phase: Phase,
    ) -> Option<SimTime> {
        if !self.ctx.online(sender, at) {
            return None;
        }
        let wire = self
            .ctx
            .wire(self.cfg.control_msg_bytes as u64, sender, receiver, at);
        let received_at = at + wire + self.ctx.propagation_ms;
        if !self.ctx.online(receiver, received_at) {
            return None;
        }
        self.history.push(MessageRecord {
            sender,
            receiver,
            phase,
            sent_at: at,
            received_at,
        });
        Some(received_at)
    }

    /// Proposal dissemination barrier: all replicas online at `at` receive
    /// the full block at `at` plus the slowest of their block transfers.
    /// Returns `(receiver, delivery)` pairs.
    fn disseminate(&mut self, proposal: &BlockProposal, at: SimTime) -> Vec<(NodeId, SimTime)> {
        let leader = proposal.producer;
        if !self.ctx.online(leader, at) {
            return Vec::new();
        }
        let receivers: Vec<NodeId> = self
            .participants()
            .into_iter()
            .filter(|&r| r != leader && self.ctx.online(r, at))
            .collect();
        let slowest = receivers
            .iter()
            .map(|&r| self.ctx.wire(proposal.byte_size, leader, r, at))
            .max()
            .unwrap_or(0);
        let delivery = at + slowest + self.ctx.propagation_ms;
        let mut delivered = Vec::new();
        for r in receivers {
            if self.ctx.online(r, delivery) {
                self.history.push(MessageRecord {
                    sender: leader,
                    receiver: r,
                    phase: Phase::Proposal,
                    sent_at: at,
                    received_at: delivery,
                });
                delivered.push((r, delivery));
            }
        }
        delivered
    }

    /// The PBFT prepare and commit phases over replicas that hold the
    /// proposal from `ready` onwards. Returns per-node local-commit times,
    /// sorted ascending.
    fn prepare_commit(
        &mut self,
        leader: NodeId,
        leader_ready: SimTime,
        replicas_ready: &[(NodeId, SimTime)],
    ) -> Vec<(SimTime, NodeId)> {
        let n = self.cfg.producers as usize;
        let need_prepares = 2 * self.cfg.max_faults() as usize;
        let need_commits = need_prepares + 1;

        // Prepare phase: proposal holders (not the leader) broadcast; a
        // node's own broadcast counts as held from its start.
        let mut prepares_held: Vec<Vec<SimTime>> = alloc::vec![Vec::new(); n];
        for &(replica, ready) in replicas_ready {
            if !self.ctx.online(replica, ready) {
                continue;
            }
            prepares_held[replica.index()].push(ready);
            for (receiver, arrival) in self.multicast(replica, ready, Phase::Prepare) {
                prepares_held[receiver.index()].push(arrival);
            }
        }

        // A node is prepared once it holds the proposal and 2f prepares.
        let mut prepared: Vec<Option<SimTime>> = alloc::vec![None; n];
        let mut proposal_ready: Vec<Option<SimTime>> = alloc::vec![None; n];
        proposal_ready[leader.index()] = Some(leader_ready);
        for &(replica, ready) in replicas_ready {
            proposal_ready[replica.index()] = Some(ready);
        }
        for node in 0..n {
            let Some(ready) = proposal_ready[node] else {
                continue;
            };
            let held = &mut prepares_held[node];
            held.sort_unstable();
            if need_prepares == 0 {
                prepared[node] = Some(ready);
            } else if held.len() >= need_prepares {
                prepared[node] = Some(ready.max(held[need_prepares - 1]));
            }
        }

        // Commit phase: prepared nodes broadcast; local commit on 2f+1 held
        // commits. Holding a commit certificate does not require the
        // proposal, so a straggler can still commit via others' messages.
        let mut commits_held: Vec<Vec<SimTime>> = alloc::vec![Vec::new(); n];
        for node in 0..n {
            let Some(at) = prepared[node] else { continue };
            if !self.ctx.online(NodeId(node as u16), at) {
                continue;
            }
            commits_held[node].push(at);
            for (receiver, arrival) in self.multicast(NodeId(node as u16), at, Phase::Commit) {
                commits_held[receiver.index()].push(arrival);
            }
        }

        let mut local_commits = Vec::new();
        for node in 0..n {
            let held = &mut commits_held[node];
            held.sort_unstable();
            if held.len() >= need_commits {
                local_commits.push((held[need_commits - 1], NodeId(node as u16)));
            }
        }
        local_commits.sort_unstable();
        local_commits
    }

    fn finish(
        self,
        committed: bool,
        commit_time: SimTime,
        used_fallback: bool,
    ) -> ConsensusOutcome {
        let mut participants: BTreeSet<NodeId> = self.history.iter().map(|m| m.sender).collect();
        // The leader participates by proposing even when nothing got through.
        if let Some(first) = self.history.first() {
            participants.insert(first.sender);
        }
        ConsensusOutcome {
            committed,
            commit_time,
            used_fallback,
            history: ConsensusHistory {
                messages: self.history,
                participants,
            },
        }
    }
}

/// Three-phase PBFT round.
pub fn run_pbft(
    proposal: &BlockProposal,
    at: SimTime,
    cfg: &ConsensusConfig,
    ctx: NetContext<'_>,
) -> ConsensusOutcome {
    let mut cascade = Cascade::new(cfg, ctx);
    let replicas = cascade.disseminate(proposal, at);
    let locals = cascade.prepare_commit(proposal.producer, at, &replicas);
    settle(cascade, cfg, at, locals, false)
}

/// Optimistic fast path with PBFT fallback.
pub fn run_bigfoot(
    proposal: &BlockProposal,
    at: SimTime,
    cfg: &ConsensusConfig,
    ctx: NetContext<'_>,
) -> ConsensusOutcome {
    let mut cascade = Cascade::new(cfg, ctx);
    let leader = proposal.producer;
    let replicas = cascade.disseminate(proposal, at);
    // The ack window opens when dissemination completes: proposal transfer
    // time varies by orders of magnitude with block size and link speed, so
    // an absolute deadline would conflate load with failure.
    let delivered_at = replicas.iter().map(|&(_, d)| d).max().unwrap_or(at);
    let deadline = delivered_at + cfg.fast_path_timeout_ms;

    // Every replica holding the proposal acks straight back to the leader.
    let mut acks = Vec::new();
    for &(replica, ready) in &replicas {
        if let Some(arrival) = cascade.send(replica, leader, ready, Phase::Ack) {
            acks.push(arrival);
        }
    }

    let all_acked =
        acks.len() == cfg.producers as usize - 1 && acks.iter().all(|&arrival| arrival < deadline);
    if all_acked {
        let cert_at = acks.iter().copied().max().unwrap_or(at);
        if ctx.online(leader, cert_at) {
            // The leader holds the certificate the moment it forms it.
            let mut holders = alloc::vec![(cert_at, leader)];
            for (receiver, arrival) in cascade.multicast(leader, cert_at, Phase::Certificate) {
                holders.push((arrival, receiver));
            }
            holders.sort_unstable();
            let quorum = cfg.quorum() as usize;
            if holders.len() >= quorum {
                let commit_time = holders[quorum - 1].0;
                return cascade.finish(true, commit_time, false);
            }
            return cascade.finish(false, at + cfg.view_timeout_ms(), false);
        }
    }

    // Fallback: the proposal is already out; run the PBFT control phases
    // from the burned fast-path deadline.
    let fallback_ready: Vec<(NodeId, SimTime)> = replicas
        .iter()
        .map(|&(r, ready)| (r, ready.max(deadline)))
        .collect();
    let locals = cascade.prepare_commit(leader, at, &fallback_ready);
    settle(cascade, cfg, at, locals, true)
}

fn settle(
    cascade: Cascade<'_>,
    cfg: &ConsensusConfig,
    at: SimTime,
    local_commits: Vec<(SimTime, NodeId)>,
    used_fallback: bool,
) -> ConsensusOutcome {
    let quorum = cfg.quorum() as usize;
    if local_commits.len() >= quorum {
        let commit_time = local_commits[quorum - 1].0;
        cascade.finish(true, commit_time, used_fallback)
    } else {
        cascade.finish(false, at + cfg.view_timeout_ms(), used_fallback)
    }
}

/// Dispatch on the currently selected protocol.
pub fn run_consensus(
    protocol: ProtocolId,
    proposal: &BlockProposal,
    at: SimTime,
    cfg: &ConsensusConfig,
    ctx: NetContext<'_>,
) -> ConsensusOutcome {
    match protocol {
        ProtocolId::Pbft => run_pbft(proposal, at, cfg, ctx),
        ProtocolId::Bigfoot => run_bigfoot(proposal, at, cfg, ctx),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Transaction;
    use crate::rng::RngStream;
    use alloc::vec;
    use proptest::prelude::*;

    fn t(ms: u64) -> SimTime {
        SimTime::from_millis(ms)
    }

    fn cfg() -> ConsensusConfig {
        ConsensusConfig::new(5, 256, 500)
    }

    fn uniform_net(nodes: u16, speed: f64) -> NetworkSchedule {
        let k = nodes as usize;
        NetworkSchedule::new(nodes, 3_600_000, vec![vec![speed; k * k]]).unwrap()
    }

    fn proposal(size_bytes: u64, leader: u16, at_ms: u64) -> BlockProposal {
        BlockProposal {
            round: 0,
            height: 0,
            producer: NodeId(leader),
            txs: vec![Transaction {
                id: 1,
                size_bytes: 100,
                created_at: t(0),
                origin: NodeId(0),
            }],
            proposed_at: t(at_ms),
            byte_size: size_bytes,
        }
    }

    fn offline_from_start(nodes: &[u16]) -> FailureSchedule {
        FailureSchedule::new(
            nodes
                .iter()
                .map(|&n| crate::network::Outage {
                    node: NodeId(n),
                    from: t(0),
                    until: t(3_600_000),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn pbft_uniform_hand_trace() {
        // Hand-derived schedule for n=5, everyone online, one uniform speed:
        //   D = t0 + wire(block) + prop            (dissemination barrier)
        //   leader prepared at D + c + p, commits reach quorum at
        //   D + 4c + 2p, with c = wire(control) and p = propagation.
        let speed = 2.0;
        let net = uniform_net(5, speed);
        let none = FailureSchedule::none();
        let ctx = NetContext {
            net: &net,
            failures: &none,
            propagation_ms: 5,
        };
        let c = wire_time_ms(256, speed).unwrap();
        let b = wire_time_ms(10_000, speed).unwrap();
        let at = t(1000);
        let outcome = run_pbft(&proposal(10_000, 0, 1000), at, &cfg(), ctx);
        assert!(outcome.committed);
        assert!(!outcome.used_fallback);
        let d = at + b + 5;
        assert_eq!(outcome.commit_time, d + 4 * c + 2 * 5);

        // One block multicast plus two all-to-all control rounds.
        let count = |phase: Phase| {
            outcome
                .history
                .messages
                .iter()
                .filter(|m| m.phase == phase)
                .count()
        };
        assert_eq!(count(Phase::Proposal), 4);
        assert_eq!(count(Phase::Prepare), 16);
        assert_eq!(count(Phase::Commit), 20);
        assert_eq!(outcome.history.participants.len(), 5);
    }

    #[test]
    fn bigfoot_uniform_hand_trace() {
        // Fast path: certificate forms at D + c + p and the quorum-th holder
        // has it at D + 3c + 2p.
        let speed = 2.0;
        let net = uniform_net(5, speed);
        let none = FailureSchedule::none();
        let ctx = NetContext {
            net: &net,
            failures: &none,
            propagation_ms: 5,
        };
        let c = wire_time_ms(256, speed).unwrap();
        let b = wire_time_ms(10_000, speed).unwrap();
        let at = t(1000);
        let outcome = run_bigfoot(&proposal(10_000, 0, 1000), at, &cfg(), ctx);
        assert!(outcome.committed);
        assert!(!outcome.used_fallback);
        let d = at + b + 5;
        assert_eq!(outcome.commit_time, d + 3 * c + 2 * 5);

        let count = |phase: Phase| {
            outcome
                .history
                .messages
                .iter()
                .filter(|m| m.phase == phase)
                .count()
        };
        assert_eq!(count(Phase::Proposal), 4);
        assert_eq!(count(Phase::Ack), 4);
        assert_eq!(count(Phase::Certificate), 4);
    }

    #[test]
    fn pbft_commits_at_quorum_boundary() {
        // n=5, f=1: two producers down leaves exactly the 2f+1 quorum.
        let net = uniform_net(5, 8.0);
        let down = offline_from_start(&[3, 4]);
        let ctx = NetContext {
            net: &net,
            failures: &down,
            propagation_ms: 5,
        };
        let outcome = run_pbft(&proposal(5_000, 0, 0), t(0), &cfg(), ctx);
        assert!(outcome.committed);
        assert_eq!(outcome.history.participants.len(), 3);
    }

    #[test]
    fn pbft_fails_below_quorum() {
        let net = uniform_net(5, 8.0);
        let down = offline_from_start(&[2, 3, 4]);
        let ctx = NetContext {
            net: &net,
            failures: &down,
            propagation_ms: 5,
        };
        let outcome = run_pbft(&proposal(5_000, 0, 0), t(0), &cfg(), ctx);
        assert!(!outcome.committed);
        assert_eq!(outcome.commit_time, t(2000));
    }

    #[test]
    fn bigfoot_fails_below_quorum() {
        let net = uniform_net(5, 8.0);
        let down = offline_from_start(&[2, 3, 4]);
        let ctx = NetContext {
            net: &net,
            failures: &down,
            propagation_ms: 5,
        };
        let outcome = run_bigfoot(&proposal(5_000, 0, 0), t(0), &cfg(), ctx);
        assert!(!outcome.committed);
        assert!(outcome.used_fallback);
        assert_eq!(outcome.commit_time, t(2000));
    }

    #[test]
    fn paired_rounds_fast_path_dominates() {
        // Paired-run oracle over 100 random uniform-speed rounds: with no
        // failures the fast path strictly beats PBFT on identical inputs.
        let mut rng = RngStream::named(7, "paired-clean");
        for i in 0..100 {
            let speed = rng.uniform(2.0, 20.0).unwrap();
            let size = 512 + rng.below(32_000);
            let leader = rng.below(5) as u16;
            let net = uniform_net(5, speed);
            let none = FailureSchedule::none();
            let ctx = NetContext {
                net: &net,
                failures: &none,
                propagation_ms: 5,
            };
            let prop = proposal(size, leader, 1000);
            let pbft = run_pbft(&prop, t(1000), &cfg(), ctx);
            let fast = run_bigfoot(&prop, t(1000), &cfg(), ctx);
            assert!(pbft.committed && fast.committed, "round {i}");
            assert!(!fast.used_fallback, "round {i}");
            assert!(
                fast.commit_time < pbft.commit_time,
                "round {i}: fast {} !< pbft {}",
                fast.commit_time,
                pbft.commit_time
            );
        }
    }

    #[test]
    fn paired_rounds_fallback_penalty() {
        // With one replica down the fast path burns its window and lands
        // strictly after PBFT on identical inputs.
        let mut rng = RngStream::named(8, "paired-faulty");
        for i in 0..100 {
            let speed = rng.uniform(2.0, 20.0).unwrap();
            let size = 512 + rng.below(32_000);
            let leader = rng.below(5) as u16;
            let down = (leader + 1 + rng.below(4) as u16) % 5;
            let net = uniform_net(5, speed);
            let failures = offline_from_start(&[down]);
            let ctx = NetContext {
                net: &net,
                failures: &failures,
                propagation_ms: 5,
            };
            let prop = proposal(size, leader, 1000);
            let pbft = run_pbft(&prop, t(1000), &cfg(), ctx);
            let fast = run_bigfoot(&prop, t(1000), &cfg(), ctx);
            assert!(pbft.committed && fast.committed, "round {i}");
            assert!(fast.used_fallback, "round {i}");
            assert!(
                fast.commit_time >= t(1000 + cfg().fast_path_timeout_ms),
                "round {i}"
            );
            assert!(
                fast.commit_time > pbft.commit_time,
                "round {i}: fast {} !> pbft {}",
                fast.commit_time,
                pbft.commit_time
            );
        }
    }

    #[test]
    fn dispatch_matches_direct_calls() {
        let net = uniform_net(5, 4.0);
        let none = FailureSchedule::none();
        let ctx = NetContext {
            net: &net,
            failures: &none,
            propagation_ms: 5,
        };
        let prop = proposal(2_000, 1, 500);
        assert_eq!(
            run_consensus(ProtocolId::Pbft, &prop, t(500), &cfg(), ctx),
            run_pbft(&prop, t(500), &cfg(), ctx)
        );
        assert_eq!(
            run_consensus(ProtocolId::Bigfoot, &prop, t(500), &cfg(), ctx),
            run_bigfoot(&prop, t(500), &cfg(), ctx)
        );
    }

    #[test]
    fn participants_are_online_senders() {
        // Trace-validation oracle: every participant sent at least one
        // recorded message, and offline producers never appear.
        let mut rng = RngStream::named(9, "participants");
        for _ in 0..200 {
            let speed = rng.uniform(1.0, 20.0).unwrap();
            let leader = rng.below(5) as u16;
            let down = (leader + 1 + rng.below(4) as u16) % 5;
            let net = uniform_net(5, speed);
            let failures = offline_from_start(&[down]);
            let ctx = NetContext {
                net: &net,
                failures: &failures,
                propagation_ms: 5,
            };
            let prop = proposal(4_000, leader, 0);
            let protocol = if rng.bernoulli(0.5) {
                ProtocolId::Pbft
            } else {
                ProtocolId::Bigfoot
            };
            let outcome = run_consensus(protocol, &prop, t(0), &cfg(), ctx);
            assert!(!outcome.history.participants.contains(&NodeId(down)));
            for m in &outcome.history.messages {
                assert!(outcome.history.participants.contains(&m.sender));
                assert!(m.received_at >= m.sent_at);
            }
        }
    }

    #[test]
    fn identical_inputs_identical_outcomes() {
        let net = uniform_net(5, 3.0);
        let none = FailureSchedule::none();
        let ctx = NetContext {
            net: &net,
            failures: &none,
            propagation_ms: 5,
        };
        let prop = proposal(9_000, 2, 700);
        let a = run_bigfoot(&prop, t(700), &cfg(), ctx);
        let b = run_bigfoot(&prop, t(700), &cfg(), ctx);
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        // Scaling every link speed up never increases the commit time.
        #[test]
        fn speedups_never_hurt(
            speed in 0.5f64..10.0,
            factor in 1.0f64..8.0,
            size in 512u64..100_000,
            leader in 0u16..5,
            bigfoot in proptest::bool::ANY,
        ) {
            let slow = uniform_net(5, speed);
            let fast = uniform_net(5, speed * factor);
            let none = FailureSchedule::none();
            let protocol = if bigfoot { ProtocolId::Bigfoot } else { ProtocolId::Pbft };
            let prop = proposal(size, leader, 0);
            let slow_outcome = run_consensus(protocol, &prop, t(0), &cfg(), NetContext {
                net: &slow, failures: &none, propagation_ms: 5,
            });
            let fast_outcome = run_consensus(protocol, &prop, t(0), &cfg(), NetContext {
                net: &fast, failures: &none, propagation_ms: 5,
            });
            prop_assert!(fast_outcome.commit_time <= slow_outcome.commit_time);
        }

        // A committed outcome always carries at least a quorum of
        // participants.
        #[test]
        fn committed_implies_quorum_participants(
            speed in 1.0f64..20.0,
            size in 512u64..50_000,
            leader in 0u16..5,
            down_mask in 0u32..32,
            bigfoot in proptest::bool::ANY,
        ) {
            let downs: Vec<u16> = (0..5u16)
                .filter(|&n| n != leader && down_mask & (1 << n) != 0)
                .collect();
            let net = uniform_net(5, speed);
            let failures = offline_from_start(&downs);
            let protocol = if bigfoot { ProtocolId::Bigfoot } else { ProtocolId::Pbft };
            let prop = proposal(size, leader, 0);
            let outcome = run_consensus(protocol, &prop, t(0), &cfg(), NetContext {
                net: &net, failures: &failures, propagation_ms: 5,
            });
            if outcome.committed {
                prop_assert!(outcome.history.participants.len() >= cfg().quorum() as usize);
            }
        }
    }
}
