//! The closed loop: one simulated run of the physical system under a
//! controller.
//!
//! Transactions arrive per the scenario traces and are broadcast into
//! producer pools (deliveries to offline producers are deferred to the end
//! of the outage, matching ledger resync on rejoin). Producers attempt
//! blocks in round-robin slots every block interval; consensus rounds are
//! serialized, so a slow round pushes the next slot out. At every control
//! step the twin ingests the window's committed blocks, the previous
//! action is rewarded with the negative window latency, and the controller
//! picks the protocol for the next window.

use alloc::vec::Vec;

use crate::agent::AgentConfig;
use crate::chain::{
    producer_for_round, window_latency, Block, BlockProposal, ChainState, MissReason, MissedCycle,
    NodeId, ProposalOutcome, Transaction, TxId,
};
use crate::consensus::{run_consensus, ConsensusConfig, ConsensusOutcome, NetContext, ProtocolId};
use crate::control::{Controller, DecideCtx, DecisionRecord, TimeSource, WhatIfEnv};
use crate::engine::EventQueue;
use crate::network::transfer_time_ms;
use crate::rng::RngStream;
use crate::scenario::{scenario_transactions, Scenario};
use crate::time::SimTime;
use crate::twin::{DigitalTwin, ObservationBatch, TwinConfig, TwinState};

/// Knobs of the physical system that are not part of a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct SystemConfig {
    pub block_interval_ms: u64,
    pub max_txs_per_block: usize,
    pub max_block_bytes: u32,
    pub block_header_bytes: u32,
    pub propagation_ms: u64,
    pub control_msg_bytes: u32,
    pub fast_path_timeout_ms: u64,
    pub view_timeout_factor: u64,
    pub initial_protocol: ProtocolId,
    /// No-block windows are rewarded as `penalty_factor` times the control
    /// step, in seconds.
    pub penalty_factor: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            block_interval_ms: 1000,
            max_txs_per_block: 128,
            max_block_bytes: 65536,
            block_header_bytes: 512,
            propagation_ms: 5,
            control_msg_bytes: 4096,
            fast_path_timeout_ms: 500,
            view_timeout_factor: 4,
            initial_protocol: ProtocolId::Pbft,
            penalty_factor: 10.0,
        }
    }
}

impl SystemConfig {
    pub fn consensus_for(&self, producers: u16) -> ConsensusConfig {
        let mut cfg =
            ConsensusConfig::new(producers, self.control_msg_bytes, self.fast_path_timeout_ms);
        cfg.view_timeout_factor = self.view_timeout_factor;
        cfg
    }

    pub fn penalty_latency_secs(&self, ts_ms: u64) -> f64 {
        self.penalty_factor * ts_ms as f64 / 1000.0
    }
}

pub struct RunContext<'a> {
    pub system: &'a SystemConfig,
    pub twin: &'a TwinConfig,
    pub agent: &'a AgentConfig,
    pub run_seed: u64,
}

/// Everything a run leaves behind.
#[derive(Debug)]
pub struct RunOutput {
    pub blocks: Vec<Block>,
    pub missed: Vec<MissedCycle>,
    pub decisions: Vec<DecisionRecord>,
    pub twin_trace: Vec<TwinState>,
    /// Transaction-weighted mean latency over the whole run; `None` when
    /// nothing committed.
    pub mean_latency_secs: Option<f64>,
    pub txs_generated: u64,
    pub txs_committed: u64,
    /// Fingerprint of the generated workload; identical across controllers
    /// on the same scenario.
    pub workload_fingerprint: u64,
    pub simulator_calls: u64,
    pub decision_wall_ns: u64,
    pub node_heights: Vec<u64>,
    /// Per-producer pool contents after in-flight deliveries drained.
    pub pool_txs: Vec<Vec<TxId>>,
}

impl RunOutput {
    pub fn latency_or(&self, penalty_secs: f64) -> f64 {
        self.mean_latency_secs.unwrap_or(penalty_secs)
    }
}

#[derive(Clone, Copy)]
enum Ev {
    Deliver { producer: u16, tx_index: u32 },
    Slot { round: u64 },
    Commit,
    Window { index: u32 },
    Resync { node: u16 },
}

fn fnv_mix(hash: u64, value: u64) -> u64 {
    let mut h = hash;
    for &b in &value.to_le_bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct Loop<'a> {
    scenario: &'a Scenario,
    system: &'a SystemConfig,
    twin_template: &'a TwinConfig,
    agent_cfg: &'a AgentConfig,
    run_seed: u64,
    consensus_cfg: ConsensusConfig,
    ts_ms: u64,
    window_count: u32,
    horizon: SimTime,
    penalty: f64,
    txs: Vec<Transaction>,
    chain: ChainState,
    twin: DigitalTwin,
    explore_rng: RngStream,
    decisions: Vec<DecisionRecord>,
    twin_trace: Vec<TwinState>,
    simulator_calls: u64,
    decision_wall_ns: u64,
    current_protocol: ProtocolId,
    prev_key: crate::twin::StateKey,
    prev_action: ProtocolId,
    pending: Option<(BlockProposal, ConsensusOutcome, ProtocolId)>,
    observed_blocks: usize,
}

impl<'a> Loop<'a> {
    fn decide(
        &mut self,
        controller: &mut Controller,
        state: TwinState,
        window_index: u32,
        timer: &mut dyn TimeSource,
    ) -> ProtocolId {
        let model = self.twin.calibrate();
        let started = timer.now_ns();
        let decision = controller.decide(&mut DecideCtx {
            env: WhatIfEnv {
                system: self.system,
                twin: self.twin_template,
                agent: self.agent_cfg,
                producers: self.scenario.params.producers,
                ts_ms: self.ts_ms,
            },
            model: &model,
            state,
            window_index,
            run_seed: self.run_seed,
            explore_rng: &mut self.explore_rng,
        });
        let elapsed = timer.now_ns().saturating_sub(started);
        self.simulator_calls += decision.simulator_calls as u64;
        self.decision_wall_ns += elapsed;
        let start = SimTime::from_millis(window_index as u64 * self.ts_ms);
        self.decisions.push(DecisionRecord {
            window_start: start,
            window_end: start + self.ts_ms,
            state,
            action: decision.action,
            reward: 0.0,
            source: decision.source,
            simulator_calls: decision.simulator_calls,
            decision_wall_ns: elapsed,
        });
        decision.action
    }

    fn handle(
        &mut self,
        queue: &mut EventQueue<Ev>,
        now: SimTime,
        event: Ev,
        controller: &mut Controller,
        timer: &mut dyn TimeSource,
    ) {
        match event {
            Ev::Deliver { producer, tx_index } => {
                let tx = &self.txs[tx_index as usize];
                if self.chain.is_committed(tx.id) {
                    return;
                }
                if self.scenario.failures.is_online(NodeId(producer), now) {
                    let tx = tx.clone();
                    self.chain.deliver(NodeId(producer), tx);
                } else {
                    // The producer catches up on broadcasts when it rejoins.
                    let back = self.scenario.failures.next_online_at(NodeId(producer), now);
                    queue
                        .schedule(back, Ev::Deliver { producer, tx_index })
                        .expect("rejoin is later");
                }
            }
            Ev::Slot { round } => {
                let producer = producer_for_round(round, self.scenario.params.producers);
                let online = self.scenario.failures.is_online(producer, now);
                let round_end = match self.chain.attempt_block(
                    round,
                    producer,
                    now,
                    online,
                    self.system.max_txs_per_block,
                    self.system.max_block_bytes,
                    self.system.block_header_bytes,
                ) {
                    ProposalOutcome::Missed(_) => now,
                    ProposalOutcome::Proposal(proposal) => {
                        let outcome = run_consensus(
                            self.current_protocol,
                            &proposal,
                            now,
                            &self.consensus_cfg,
                            NetContext {
                                net: &self.scenario.network,
                                failures: &self.scenario.failures,
                                propagation_ms: self.system.propagation_ms,
                            },
                        );
                        let end = outcome.commit_time;
                        if outcome.committed {
                            self.pending = Some((proposal, outcome, self.current_protocol));
                            queue.schedule(end, Ev::Commit).expect("commit after slot");
                        } else {
                            self.chain.record_missed(
                                round,
                                now,
                                producer,
                                MissReason::ConsensusFailed,
                            );
                        }
                        end
                    }
                };
                let next = (now + self.system.block_interval_ms).max(round_end);
                if next < self.horizon {
                    queue
                        .schedule(next, Ev::Slot { round: round + 1 })
                        .expect("next slot is later");
                }
            }
            Ev::Commit => {
                if let Some((proposal, outcome, protocol)) = self.pending.take() {
                    let failures = &self.scenario.failures;
                    self.chain
                        .commit_block(proposal, outcome, protocol, |node| {
                            failures.is_online(node, now)
                        });
                }
            }
            Ev::Window { index } => {
                let start = SimTime::from_millis((index as u64 - 1) * self.ts_ms);
                let batch_blocks = &self.chain.chain()[self.observed_blocks..];
                let state = self.twin.observe(&ObservationBatch {
                    blocks: batch_blocks,
                    window: (start, now),
                });
                let reward = -window_latency(batch_blocks, (start, now)).unwrap_or(self.penalty);
                self.observed_blocks = self.chain.chain().len();
                self.twin_trace.push(state);
                if let Some(last) = self.decisions.last_mut() {
                    last.reward = reward;
                }
                controller.learn(
                    self.prev_key,
                    self.prev_action,
                    reward,
                    state.key(),
                    self.agent_cfg,
                );
                self.prev_key = state.key();
                if index < self.window_count {
                    self.current_protocol = self.decide(controller, state, index, timer);
                    self.prev_action = self.current_protocol;
                }
            }
            Ev::Resync { node } => {
                self.chain.resync(NodeId(node));
            }
        }
    }
}

/// Run one scenario to its horizon under the given controller.
pub fn run_system(
    scenario: &Scenario,
    controller: &mut Controller,
    ctx: &RunContext<'_>,
    timer: &mut dyn TimeSource,
) -> RunOutput {
    let params = &scenario.params;
    let system = ctx.system;
    let horizon = SimTime::from_millis(params.horizon_ms);
    let ts_ms = params.ts_ms;

    let mut twin_cfg = ctx.twin.clone();
    twin_cfg.producers = params.producers;
    twin_cfg.propagation_ms = system.propagation_ms;
    twin_cfg.control_msg_bytes = system.control_msg_bytes;
    twin_cfg.block_interval_ms = system.block_interval_ms;
    let twin = DigitalTwin::new(twin_cfg);

    let txs = scenario_transactions(scenario);
    let mut fingerprint = 0xcbf2_9ce4_8422_2325u64;
    for tx in &txs {
        fingerprint = fnv_mix(fingerprint, tx.id);
        fingerprint = fnv_mix(fingerprint, tx.created_at.millis());
        fingerprint = fnv_mix(fingerprint, tx.size_bytes as u64);
        fingerprint = fnv_mix(fingerprint, tx.origin.0 as u64);
    }

    let mut queue: EventQueue<Ev> = EventQueue::new();

    // Window boundaries are scheduled before everything else so they always
    // precede same-instant commits; a block landing exactly on a boundary
    // counts toward the next window.
    let window_count = (params.horizon_ms / ts_ms) as u32;
    for index in 1..=window_count {
        queue
            .schedule(
                SimTime::from_millis(index as u64 * ts_ms),
                Ev::Window { index },
            )
            .expect("window in range");
    }
    for outage in scenario.failures.outages() {
        queue
            .schedule(
                outage.until,
                Ev::Resync {
                    node: outage.node.0,
                },
            )
            .expect("outage within horizon");
    }
    for (index, tx) in txs.iter().enumerate() {
        for producer in 0..params.producers {
            let delay = if tx.origin.0 == producer {
                0
            } else {
                let speed =
                    scenario
                        .network
                        .speed_at_clamped(tx.origin, NodeId(producer), tx.created_at);
                transfer_time_ms(tx.size_bytes as u64, speed, system.propagation_ms)
                    .expect("scenario speeds are positive")
            };
            queue
                .schedule(
                    tx.created_at + delay,
                    Ev::Deliver {
                        producer,
                        tx_index: index as u32,
                    },
                )
                .expect("delivery after creation");
        }
    }
    if system.block_interval_ms < params.horizon_ms {
        queue
            .schedule(
                SimTime::from_millis(system.block_interval_ms),
                Ev::Slot { round: 0 },
            )
            .expect("first slot in range");
    }

    let initial_key = twin.state().key();
    let mut state = Loop {
        scenario,
        system,
        twin_template: ctx.twin,
        agent_cfg: ctx.agent,
        run_seed: ctx.run_seed,
        consensus_cfg: system.consensus_for(params.producers),
        ts_ms,
        window_count,
        horizon,
        penalty: system.penalty_latency_secs(ts_ms),
        txs,
        chain: ChainState::new(params.nodes, params.producers),
        twin,
        explore_rng: RngStream::named(ctx.run_seed, "explore"),
        decisions: Vec::new(),
        twin_trace: Vec::new(),
        simulator_calls: 0,
        decision_wall_ns: 0,
        current_protocol: system.initial_protocol,
        prev_key: initial_key,
        prev_action: system.initial_protocol,
        pending: None,
        observed_blocks: 0,
    };

    // Decision for the first window, before anything has been observed.
    let first_state = state.twin.state();
    state.current_protocol = state.decide(controller, first_state, 0, timer);
    state.prev_action = state.current_protocol;

    queue.run_until(horizon, |queue, event| {
        state.handle(queue, event.fire_at, event.payload, controller, timer);
    });

    // Flush in-flight deliveries so end-of-run accounting is exact: every
    // generated transaction is either committed or pending in a pool.
    while let Some(event) = queue.pop_due(SimTime::from_millis(u64::MAX)) {
        if let Ev::Deliver { producer, tx_index } = event.payload {
            let tx = state.txs[tx_index as usize].clone();
            if !state.chain.is_committed(tx.id) {
                state.chain.deliver(NodeId(producer), tx);
            }
        }
    }

    let total_latency_ms: u64 = state
        .chain
        .chain()
        .iter()
        .map(Block::total_latency_ms)
        .sum();
    let committed: u64 = state.chain.chain().iter().map(|b| b.txs.len() as u64).sum();
    let mean_latency_secs = if committed == 0 {
        None
    } else {
        Some(total_latency_ms as f64 / committed as f64 / 1000.0)
    };

    let pool_txs = state
        .chain
        .pools()
        .iter()
        .map(|pool| pool.iter().map(|tx| tx.id).collect())
        .collect();

    RunOutput {
        node_heights: state.chain.node_heights().to_vec(),
        missed: state.chain.missed().to_vec(),
        blocks: state.chain.into_chain(),
        decisions: state.decisions,
        twin_trace: state.twin_trace,
        mean_latency_secs,
        txs_generated: state.txs.len() as u64,
        txs_committed: committed,
        workload_fingerprint: fingerprint,
        simulator_calls: state.simulator_calls,
        decision_wall_ns: state.decision_wall_ns,
        pool_txs,
    }
}
