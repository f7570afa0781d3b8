//! The sensing half of the feedback loop.
//!
//! The twin only ever sees committed blocks. From their consensus
//! histories it estimates which producers are failing, the network speed
//! bounds and the workload rate, and it maintains the discretized control
//! state `(F, N_L, N_H)`.
//!
//! Bandwidth is inferred from control messages only: their size is a known
//! constant, so `received - sent - propagation` is exactly the wire time
//! the link charged for them.

use alloc::vec::Vec;

use crate::chain::{Block, NodeId, Phase};
use crate::network::wire_time_ms;
use crate::time::SimTime;

/// Discretized twin state; `(F, N_L, N_H)` is the agent's state key.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwinState {
    pub failure: bool,
    pub net_lo: u32,
    pub net_hi: u32,
    /// Informational workload estimate; not part of the state key.
    pub tps_estimate: f64,
    pub as_of: SimTime,
}

pub type StateKey = (u8, u32, u32);

impl TwinState {
    pub fn key(&self) -> StateKey {
        (self.failure as u8, self.net_lo, self.net_hi)
    }
}

/// Blocks committed during one control window.
#[derive(Debug, Clone, Copy)]
pub struct ObservationBatch<'a> {
    pub blocks: &'a [Block],
    pub window: (SimTime, SimTime),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TwinConfig {
    /// Exponential smoothing factor; 1.0 is memoryless.
    pub lambda: f64,
    pub propagation_ms: u64,
    pub control_msg_bytes: u32,
    pub block_interval_ms: u64,
    /// A proposal gap longer than this many block intervals reads as a
    /// missed cycle.
    pub gap_factor: f64,
    pub producers: u16,
    pub cold_net_lo: f64,
    pub cold_net_hi: f64,
    pub cold_tps: f64,
    pub cold_tx_size_lo: f64,
    pub cold_tx_size_hi: f64,
}

impl Default for TwinConfig {
    fn default() -> Self {
        TwinConfig {
            lambda: 0.5,
            propagation_ms: 5,
            control_msg_bytes: 4096,
            block_interval_ms: 1000,
            gap_factor: 3.0,
            producers: 5,
            cold_net_lo: 1.0,
            cold_net_hi: 10.0,
            cold_tps: 10.0,
            cold_tx_size_lo: 256.0,
            cold_tx_size_hi: 1024.0,
        }
    }
}

/// Calibrated model of the physical system, used to drive what-if runs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatorModel {
    pub speed_lo_mbps: f64,
    pub speed_hi_mbps: f64,
    pub tps: f64,
    pub tx_size_lo: f64,
    pub tx_size_hi: f64,
    /// Per-producer fraction of observed windows with an absence.
    pub failure_rate: Vec<f64>,
    /// Set until the first window has been observed.
    pub cold_start: bool,
}

impl SimulatorModel {
    /// Producer with the highest estimated failure frequency (lowest id on
    /// ties); the candidate to take offline in failure what-ifs.
    pub fn most_failing_producer(&self) -> NodeId {
        let mut best = 0usize;
        for (i, &rate) in self.failure_rate.iter().enumerate() {
            if rate > self.failure_rate[best] {
                best = i;
            }
        }
        NodeId(best as u16)
    }
}

fn round_half_away(x: f64) -> u32 {
    let r = libm::round(x);
    if r < 0.0 {
        0
    } else {
        r as u32
    }
}

/// The speed the control-message estimator reports for a link whose true
/// speed is `mbps`: the millisecond clock quantizes wire times, so the
/// estimate snaps to `bytes * 8e-3 / ceil(wire_ms)`. Used by training
/// augmentation to key synthetic scenarios the way the live twin would.
pub fn sensed_speed_mbps(true_mbps: f64, control_msg_bytes: u32) -> f64 {
    let wire = wire_time_ms(control_msg_bytes as u64, true_mbps).expect("positive speed");
    if wire == 0 {
        return true_mbps;
    }
    control_msg_bytes as f64 * 8e-3 / wire as f64
}

#[derive(Debug, Clone)]
pub struct DigitalTwin {
    cfg: TwinConfig,
    state: TwinState,
    smoothed_lo: f64,
    smoothed_hi: f64,
    bounds_seen: bool,
    smoothed_tps: f64,
    tps_seen: bool,
    tx_size_lo: f64,
    tx_size_hi: f64,
    sizes_seen: bool,
    windows_observed: u32,
    absence_windows: Vec<u32>,
}

impl DigitalTwin {
    pub fn new(cfg: TwinConfig) -> Self {
        let state = TwinState {
            failure: false,
            net_lo: round_half_away(cfg.cold_net_lo),
            net_hi: round_half_away(cfg.cold_net_hi),
            tps_estimate: cfg.cold_tps,
            as_of: SimTime::ZERO,
        };
        let producers = cfg.producers as usize;
        DigitalTwin {
            smoothed_lo: cfg.cold_net_lo,
            smoothed_hi: cfg.cold_net_hi,
            bounds_seen: false,
            smoothed_tps: cfg.cold_tps,
            tps_seen: false,
            tx_size_lo: cfg.cold_tx_size_lo,
            tx_size_hi: cfg.cold_tx_size_hi,
            sizes_seen: false,
            windows_observed: 0,
            absence_windows: alloc::vec![0; producers],
            state,
            cfg,
        }
    }

    pub fn state(&self) -> TwinState {
        self.state
    }

    /// F = 1 when a producer sat out a consensus round in the window, when
    /// the window produced no blocks at all, or when proposal gaps betray
    /// missed cycles.
    pub fn detect_failures(&self, batch: &ObservationBatch<'_>) -> bool {
        if batch.blocks.is_empty() {
            return true;
        }
        for block in batch.blocks {
            for p in 0..self.cfg.producers {
                if !block.history.participants.contains(&NodeId(p)) {
                    return true;
                }
            }
        }
        let max_gap = (self.cfg.gap_factor * self.cfg.block_interval_ms as f64) as u64;
        let mut last = batch.window.0;
        for block in batch.blocks {
            if block.proposed_at.saturating_since(last) > max_gap {
                return true;
            }
            last = last.max(block.proposed_at);
        }
        batch.window.1.saturating_since(last) > max_gap
    }

    /// Raw min/max Mbps estimates from the window's control messages, or
    /// `None` when no control message was observed.
    pub fn infer_network_bounds(&self, batch: &ObservationBatch<'_>) -> Option<(f64, f64)> {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        let mut seen = false;
        for block in batch.blocks {
            for m in &block.history.messages {
                if m.phase == Phase::Proposal {
                    continue;
                }
                let wire_ms = (m.received_at - m.sent_at).saturating_sub(self.cfg.propagation_ms);
                if wire_ms == 0 {
                    continue;
                }
                let secs = wire_ms as f64 / 1000.0;
                let est = 8.0 * self.cfg.control_msg_bytes as f64 / secs / 1e6;
                lo = lo.min(est);
                hi = hi.max(est);
                seen = true;
            }
        }
        seen.then_some((lo, hi))
    }

    /// Committed transactions per second over the window.
    pub fn observed_tps(&self, batch: &ObservationBatch<'_>) -> f64 {
        let count: usize = batch.blocks.iter().map(|b| b.txs.len()).sum();
        let span_secs = (batch.window.1 - batch.window.0) as f64 / 1000.0;
        if span_secs == 0.0 {
            0.0
        } else {
            count as f64 / span_secs
        }
    }

    /// Ingest one window of observations and produce the new state.
    pub fn observe(&mut self, batch: &ObservationBatch<'_>) -> TwinState {
        let lambda = self.cfg.lambda;

        if let Some((lo, hi)) = self.infer_network_bounds(batch) {
            if self.bounds_seen {
                self.smoothed_lo = lambda * lo + (1.0 - lambda) * self.smoothed_lo;
                self.smoothed_hi = lambda * hi + (1.0 - lambda) * self.smoothed_hi;
            } else {
                self.smoothed_lo = lo;
                self.smoothed_hi = hi;
                self.bounds_seen = true;
            }
        }

        let tps_obs = self.observed_tps(batch);
        if self.tps_seen {
            self.smoothed_tps = lambda * tps_obs + (1.0 - lambda) * self.smoothed_tps;
        } else {
            self.smoothed_tps = tps_obs;
            self.tps_seen = true;
        }

        for block in batch.blocks {
            for tx in &block.txs {
                let size = tx.size_bytes as f64;
                if self.sizes_seen {
                    self.tx_size_lo = self.tx_size_lo.min(size);
                    self.tx_size_hi = self.tx_size_hi.max(size);
                } else {
                    self.tx_size_lo = size;
                    self.tx_size_hi = size;
                    self.sizes_seen = true;
                }
            }
        }

        self.windows_observed += 1;
        if !batch.blocks.is_empty() {
            for p in 0..self.cfg.producers {
                let absent = batch
                    .blocks
                    .iter()
                    .any(|b| !b.history.participants.contains(&NodeId(p)));
                if absent {
                    self.absence_windows[p as usize] += 1;
                }
            }
        }

        let net_lo = round_half_away(self.smoothed_lo);
        let net_hi = round_half_away(self.smoothed_hi);
        self.state = TwinState {
            failure: self.detect_failures(batch),
            net_lo: net_lo.min(net_hi),
            net_hi: net_hi.max(net_lo),
            tps_estimate: self.smoothed_tps,
            as_of: batch.window.1,
        };
        self.state
    }

    /// Calibrated simulator model from everything observed so far. Before
    /// the first window it reports the config defaults with the cold-start
    /// marker set.
    pub fn calibrate(&self) -> SimulatorModel {
        let windows = self.windows_observed.max(1) as f64;
        SimulatorModel {
            speed_lo_mbps: self.smoothed_lo,
            speed_hi_mbps: self.smoothed_hi,
            tps: self.smoothed_tps,
            tx_size_lo: self.tx_size_lo,
            tx_size_hi: self.tx_size_hi,
            failure_rate: self
                .absence_windows
                .iter()
                .map(|&w| w as f64 / windows)
                .collect(),
            cold_start: self.windows_observed == 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ConsensusHistory, MessageRecord, Transaction};
    use crate::consensus::ProtocolId;
    use alloc::collections::BTreeSet;
    use alloc::vec;

    fn t(ms: u64) -> SimTime {
        SimTime::from_millis(ms)
    }

    fn cfg() -> TwinConfig {
        TwinConfig::default()
    }

    fn full_participants() -> BTreeSet<NodeId> {
        (0..5).map(NodeId).collect()
    }

    fn block_at(proposed_ms: u64, committed_ms: u64, participants: BTreeSet<NodeId>) -> Block {
        Block {
            height: 0,
            producer: NodeId(0),
            txs: vec![Transaction {
                id: proposed_ms,
                size_bytes: 700,
                created_at: t(proposed_ms.saturating_sub(100)),
                origin: NodeId(0),
            }],
            proposed_at: t(proposed_ms),
            committed_at: t(committed_ms),
            protocol: ProtocolId::Pbft,
            history: ConsensusHistory {
                messages: Vec::new(),
                participants,
            },
        }
    }

    fn steady_blocks(window: (SimTime, SimTime)) -> Vec<Block> {
        let mut blocks = Vec::new();
        let mut at = window.0.millis() + 1000;
        while at < window.1.millis() {
            blocks.push(block_at(at, at + 50, full_participants()));
            at += 1000;
        }
        blocks
    }

    #[test]
    fn full_participation_is_healthy() {
        let twin = DigitalTwin::new(cfg());
        let window = (t(0), t(10_000));
        let blocks = steady_blocks(window);
        assert!(!twin.detect_failures(&ObservationBatch {
            blocks: &blocks,
            window
        }));
    }

    #[test]
    fn missing_producer_flags_failure() {
        let twin = DigitalTwin::new(cfg());
        let window = (t(0), t(10_000));
        let mut blocks = steady_blocks(window);
        let mut p = full_participants();
        p.remove(&NodeId(3));
        blocks[4].history.participants = p;
        assert!(twin.detect_failures(&ObservationBatch {
            blocks: &blocks,
            window
        }));
    }

    #[test]
    fn empty_window_flags_failure() {
        let twin = DigitalTwin::new(cfg());
        assert!(twin.detect_failures(&ObservationBatch {
            blocks: &[],
            window: (t(0), t(10_000))
        }));
    }

    #[test]
    fn proposal_gap_flags_failure() {
        let twin = DigitalTwin::new(cfg());
        let window = (t(0), t(10_000));
        // Proposals at 1s and 8s: a 7 s gap with BI = 1 s reads as missed
        // cycles.
        let blocks = vec![
            block_at(1000, 1100, full_participants()),
            block_at(8000, 8100, full_participants()),
        ];
        assert!(twin.detect_failures(&ObservationBatch {
            blocks: &blocks,
            window
        }));
    }

    #[test]
    fn single_record_bound_arithmetic() {
        // 256 B delivered in 8 ms with 5 ms propagation: 3 ms of wire time,
        // about 0.68 Mbps, rounding to 1.
        let twin = DigitalTwin::new(TwinConfig {
            control_msg_bytes: 256,
            ..cfg()
        });
        let window = (t(0), t(10_000));
        let mut block = block_at(1000, 1100, full_participants());
        block.history.messages.push(MessageRecord {
            sender: NodeId(0),
            receiver: NodeId(1),
            phase: Phase::Prepare,
            sent_at: t(1000),
            received_at: t(1008),
        });
        let blocks = vec![block];
        let (lo, hi) = twin
            .infer_network_bounds(&ObservationBatch {
                blocks: &blocks,
                window,
            })
            .unwrap();
        assert!((lo - 0.6827).abs() < 1e-3);
        assert_eq!(lo, hi);
        assert_eq!(round_half_away(lo), 1);
    }

    #[test]
    fn no_history_carries_bounds_forward() {
        let mut twin = DigitalTwin::new(cfg());
        let window = (t(0), t(10_000));
        let blocks = steady_blocks(window);
        let s = twin.observe(&ObservationBatch {
            blocks: &blocks,
            window,
        });
        // No control message records anywhere: cold bounds survive.
        assert_eq!(s.net_lo, round_half_away(cfg().cold_net_lo));
        assert_eq!(s.net_hi, round_half_away(cfg().cold_net_hi));
    }

    #[test]
    fn tps_direct_then_decaying() {
        let mut twin = DigitalTwin::new(cfg());
        let window = (t(0), t(10_000));
        // 100 txs in a 10 s window with no history reads 10 tps.
        let mut blocks = Vec::new();
        for i in 0..10u64 {
            let mut b = block_at(1000 + i * 900, 1000 + i * 900 + 50, full_participants());
            b.txs = (0..10)
                .map(|j| Transaction {
                    id: i * 10 + j,
                    size_bytes: 500,
                    created_at: t(500),
                    origin: NodeId(0),
                })
                .collect();
            blocks.push(b);
        }
        let s = twin.observe(&ObservationBatch {
            blocks: &blocks,
            window,
        });
        assert_eq!(s.tps_estimate, 10.0);

        // An empty follow-up window smooths toward zero.
        let s = twin.observe(&ObservationBatch {
            blocks: &[],
            window: (t(10_000), t(20_000)),
        });
        assert_eq!(s.tps_estimate, 5.0);
        assert!(s.failure);
    }

    #[test]
    fn identical_batches_identical_states() {
        let window = (t(0), t(10_000));
        let blocks = steady_blocks(window);
        let batch = ObservationBatch {
            blocks: &blocks,
            window,
        };
        let mut a = DigitalTwin::new(cfg());
        let mut b = DigitalTwin::new(cfg());
        assert_eq!(a.observe(&batch), b.observe(&batch));
    }

    #[test]
    fn sensed_speed_quantizes_through_the_clock() {
        // 1.024 Mbps puts exactly 2 ms of wire time on a control message,
        // so the estimator reproduces it exactly.
        assert_eq!(sensed_speed_mbps(1.024, 256), 1.024);
        assert_eq!(sensed_speed_mbps(2.048, 256), 2.048);
        // Faster links saturate the 1 ms floor.
        assert_eq!(sensed_speed_mbps(16.0, 256), 2.048);
    }

    #[test]
    fn cold_start_marker_and_defaults() {
        let twin = DigitalTwin::new(cfg());
        let model = twin.calibrate();
        assert!(model.cold_start);
        assert_eq!(model.speed_lo_mbps, cfg().cold_net_lo);
        assert_eq!(model.tps, cfg().cold_tps);

        let mut twin = DigitalTwin::new(cfg());
        let window = (t(0), t(10_000));
        let blocks = steady_blocks(window);
        twin.observe(&ObservationBatch {
            blocks: &blocks,
            window,
        });
        assert!(!twin.calibrate().cold_start);
    }

    #[test]
    fn failure_rate_tracks_absences() {
        let mut twin = DigitalTwin::new(cfg());
        let window = (t(0), t(10_000));
        let mut blocks = steady_blocks(window);
        let mut p = full_participants();
        p.remove(&NodeId(2));
        for b in &mut blocks {
            b.history.participants = p.clone();
        }
        twin.observe(&ObservationBatch {
            blocks: &blocks,
            window,
        });
        let model = twin.calibrate();
        assert_eq!(model.failure_rate[2], 1.0);
        assert_eq!(model.failure_rate[0], 0.0);
        assert_eq!(model.most_failing_producer(), NodeId(2));
    }
}
