//! Randomized system instances and workloads.
//!
//! A scenario fixes everything the physical system does over one run:
//! per-link speeds, node outages, the transaction arrival rate and the
//! transaction size spread. All of it is piecewise-constant with period
//! `TI` and fully determined by `(params, seed)`.

use alloc::vec::Vec;
use core::fmt;

use crate::chain::{NodeId, Transaction, TxId};
use crate::network::{FailureSchedule, NetworkSchedule, Outage};
use crate::rng::RngStream;
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    InvalidRange(&'static str),
    InvalidValue(&'static str),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::InvalidRange(what) => write!(f, "invalid range for {what}"),
            ScenarioError::InvalidValue(what) => write!(f, "invalid value for {what}"),
        }
    }
}

/// Inclusive uniform range descriptor.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

impl Range {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Range { lo, hi }
    }

    pub fn is_valid(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi
    }

    pub fn draw(&self, rng: &mut RngStream) -> f64 {
        rng.uniform(self.lo, self.hi).expect("range validated")
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct ScenarioParams {
    /// Transactions per second generated across the system.
    pub tps_range: Range,
    /// Transaction payload bytes.
    pub tx_size_range: Range,
    /// Probability that a given producer starts an outage in a TI interval.
    pub outage_prob_per_interval: f64,
    /// Outage duration in milliseconds.
    pub outage_duration_ms: Range,
    /// Per-link speed in Mbps.
    pub speed_range: Range,
    pub horizon_ms: u64,
    /// Interval at which the ground truth changes.
    pub ti_ms: u64,
    /// The twin's control time step.
    pub ts_ms: u64,
    pub nodes: u16,
    pub producers: u16,
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !self.tps_range.is_valid() || self.tps_range.lo <= 0.0 {
            return Err(ScenarioError::InvalidRange("tps"));
        }
        if !self.tx_size_range.is_valid() || self.tx_size_range.lo < 1.0 {
            return Err(ScenarioError::InvalidRange("tx size"));
        }
        if !(0.0..=1.0).contains(&self.outage_prob_per_interval) {
            return Err(ScenarioError::InvalidValue("outage probability"));
        }
        if !self.outage_duration_ms.is_valid() || self.outage_duration_ms.lo < 0.0 {
            return Err(ScenarioError::InvalidRange("outage duration"));
        }
        if !self.speed_range.is_valid() || self.speed_range.lo <= 0.0 {
            return Err(ScenarioError::InvalidRange("speed"));
        }
        if self.ti_ms == 0 || self.ts_ms == 0 || self.horizon_ms == 0 {
            return Err(ScenarioError::InvalidValue("durations must be positive"));
        }
        if self.horizon_ms % self.ts_ms != 0 {
            return Err(ScenarioError::InvalidValue(
                "horizon must be a multiple of the control step",
            ));
        }
        if self.producers == 0 || self.producers > self.nodes {
            return Err(ScenarioError::InvalidValue("producer count"));
        }
        Ok(())
    }

    pub fn producer_ids(&self) -> Vec<NodeId> {
        (0..self.producers).map(NodeId).collect()
    }
}

/// One generated system instance.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Scenario {
    pub params: ScenarioParams,
    pub seed: u64,
    pub network: NetworkSchedule,
    pub failures: FailureSchedule,
    /// Arrival rate per TI interval.
    pub tps_trace: Vec<f64>,
    /// Per-interval transaction size descriptor (a uniform sub-range).
    pub tx_size_trace: Vec<Range>,
}

impl Scenario {
    pub fn intervals(&self) -> usize {
        self.tps_trace.len()
    }

    pub fn rate_at(&self, t: SimTime) -> f64 {
        let idx = ((t.millis() / self.params.ti_ms) as usize).min(self.tps_trace.len() - 1);
        self.tps_trace[idx]
    }
}

/// Number of TI intervals covering the horizon, plus slack so work that
/// straddles the end of the run still has defined ground truth.
fn interval_count(params: &ScenarioParams) -> usize {
    (params.horizon_ms.div_ceil(params.ti_ms) + 2) as usize
}

/// Generate a scenario. Every TI interval gets independent draws of
/// per-link speeds, the arrival rate and the size descriptor; outages start
/// per-producer with the configured probability and last a drawn duration.
pub fn generate_scenario(params: &ScenarioParams, seed: u64) -> Result<Scenario, ScenarioError> {
    params.validate()?;
    let k = params.nodes as usize;
    let n_intervals = interval_count(params);
    let real_intervals = (params.horizon_ms / params.ti_ms) as usize;

    let mut net_rng = RngStream::named(seed, "network");
    let mut intervals = Vec::with_capacity(n_intervals);
    for _ in 0..n_intervals {
        let mut matrix = Vec::with_capacity(k * k);
        for _ in 0..k * k {
            matrix.push(params.speed_range.draw(&mut net_rng));
        }
        intervals.push(matrix);
    }
    let network = NetworkSchedule::new(params.nodes, params.ti_ms, intervals)
        .map_err(|_| ScenarioError::InvalidValue("network schedule"))?;

    let mut fail_rng = RngStream::named(seed, "failures");
    let mut outages = Vec::new();
    let mut last_end = alloc::vec![0u64; params.producers as usize];
    for interval in 0..real_intervals {
        let start_of_interval = interval as u64 * params.ti_ms;
        for producer in 0..params.producers {
            if !fail_rng.bernoulli(params.outage_prob_per_interval) {
                continue;
            }
            let offset = fail_rng.below(params.ti_ms);
            let duration = params.outage_duration_ms.draw(&mut fail_rng) as u64;
            let from = start_of_interval + offset;
            let until = (from + duration).min(params.horizon_ms);
            // Overlaps with this producer's previous outage are dropped.
            if from >= params.horizon_ms || from < last_end[producer as usize] || until <= from {
                continue;
            }
            last_end[producer as usize] = until;
            outages.push(Outage {
                node: NodeId(producer),
                from: SimTime::from_millis(from),
                until: SimTime::from_millis(until),
            });
        }
    }
    let failures = FailureSchedule::new(outages)
        .map_err(|_| ScenarioError::InvalidValue("failure schedule"))?;

    let mut tps_rng = RngStream::named(seed, "tps");
    let tps_trace: Vec<f64> = (0..n_intervals)
        .map(|_| params.tps_range.draw(&mut tps_rng))
        .collect();

    let mut size_rng = RngStream::named(seed, "txsize");
    let tx_size_trace: Vec<Range> = (0..n_intervals)
        .map(|_| {
            let a = params.tx_size_range.draw(&mut size_rng);
            let b = params.tx_size_range.draw(&mut size_rng);
            Range::new(a.min(b), a.max(b))
        })
        .collect();

    Ok(Scenario {
        params: params.clone(),
        seed,
        network,
        failures,
        tps_trace,
        tx_size_trace,
    })
}

/// Poisson arrivals over `[0, horizon)` at a fixed rate: exponential gaps,
/// sizes from the descriptor, origins uniform over the nodes. Timestamps
/// are truncated to whole milliseconds.
pub fn generate_transactions(
    rate_tps: f64,
    size_spec: Range,
    horizon: SimTime,
    nodes: u16,
    first_id: TxId,
    rng: &mut RngStream,
) -> Result<Vec<Transaction>, ScenarioError> {
    if !(rate_tps > 0.0) {
        return Err(ScenarioError::InvalidValue("arrival rate"));
    }
    if !size_spec.is_valid() || size_spec.lo < 1.0 {
        return Err(ScenarioError::InvalidRange("tx size"));
    }
    let mut txs = Vec::new();
    let horizon_secs = horizon.millis() as f64 / 1000.0;
    let mut at_secs = 0.0f64;
    let mut id = first_id;
    loop {
        at_secs += rng.exp_gap_secs(rate_tps);
        if at_secs >= horizon_secs {
            break;
        }
        let size = libm::round(size_spec.draw(rng)).max(1.0) as u32;
        let origin = NodeId(rng.below(nodes as u64) as u16);
        txs.push(Transaction {
            id,
            size_bytes: size,
            created_at: SimTime::from_millis((at_secs * 1000.0) as u64),
            origin,
        });
        id += 1;
    }
    Ok(txs)
}

/// All transactions of a scenario in creation order, following the
/// per-interval rate and size traces.
pub fn scenario_transactions(scenario: &Scenario) -> Vec<Transaction> {
    let params = &scenario.params;
    let mut txs = Vec::new();
    let real_intervals = (params.horizon_ms / params.ti_ms) as usize;
    for interval in 0..real_intervals.max(1).min(scenario.intervals()) {
        let start = interval as u64 * params.ti_ms;
        if start >= params.horizon_ms {
            break;
        }
        let span = params.ti_ms.min(params.horizon_ms - start);
        let mut rng = RngStream::indexed(scenario.seed, "txgen", interval as u64);
        let mut batch = generate_transactions(
            scenario.tps_trace[interval],
            scenario.tx_size_trace[interval],
            SimTime::from_millis(span),
            params.nodes,
            txs.len() as TxId,
            &mut rng,
        )
        .expect("scenario traces are validated");
        for tx in &mut batch {
            tx.created_at = SimTime::from_millis(tx.created_at.millis() + start);
        }
        txs.append(&mut batch);
    }
    txs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum WorkloadLabel {
    Wl1,
    Wl2,
    Custom,
}

impl WorkloadLabel {
    pub fn as_str(self) -> &'static str {
        match self {
            WorkloadLabel::Wl1 => "wl1",
            WorkloadLabel::Wl2 => "wl2",
            WorkloadLabel::Custom => "custom",
        }
    }
}

impl fmt::Display for WorkloadLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An ordered batch of scenarios drawn from one parameter record.
#[derive(Debug, Clone)]
pub struct Workload {
    pub label: WorkloadLabel,
    pub scenarios: Vec<Scenario>,
}

/// Scenarios `0..count` for a workload, seeded per index from the master
/// seed so controllers can be compared pairwise on identical instances.
pub fn build_workload(
    label: WorkloadLabel,
    params: &ScenarioParams,
    master_seed: u64,
    count: usize,
) -> Result<Workload, ScenarioError> {
    let mut scenarios = Vec::with_capacity(count);
    for i in 0..count {
        let seed = crate::rng::derive_seed(master_seed, label.as_str(), i as u64);
        scenarios.push(generate_scenario(params, seed)?);
    }
    Ok(Workload { label, scenarios })
}

impl Default for ScenarioParams {
    fn default() -> Self {
        default_wl1_params()
    }
}

/// Training workload defaults: 8 nodes with 5 producers, moderate load and
/// a healthy network with occasional outages.
pub fn default_wl1_params() -> ScenarioParams {
    ScenarioParams {
        tps_range: Range::new(5.0, 40.0),
        tx_size_range: Range::new(200.0, 1200.0),
        outage_prob_per_interval: 0.02,
        outage_duration_ms: Range::new(10_000.0, 30_000.0),
        speed_range: Range::new(2.0, 10.0),
        horizon_ms: 3_600_000,
        ti_ms: 30_000,
        ts_ms: 10_000,
        nodes: 8,
        producers: 5,
    }
}

/// Evaluation workload defaults: the same system at a later stage, with
/// heavier load, a slower network and more frequent outages.
pub fn default_wl2_params() -> ScenarioParams {
    ScenarioParams {
        tps_range: Range::new(15.0, 50.0),
        speed_range: Range::new(1.0, 5.0),
        outage_prob_per_interval: 0.05,
        outage_duration_ms: Range::new(10_000.0, 40_000.0),
        ..default_wl1_params()
    }
}
