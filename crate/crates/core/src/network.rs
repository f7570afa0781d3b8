//! Ground-truth network and failure schedules.
//!
//! Link speeds are piecewise-constant: one K×K Mbps matrix per interval of
//! length `TI`. Outages are half-open `[from, until)` windows during which a
//! node neither sends nor receives; messages addressed to an offline node
//! are dropped, not queued.

use alloc::vec::Vec;
use core::fmt;

use crate::chain::NodeId;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NetworkError {
    NonPositiveSpeed {
        speed: f64,
    },
    BeyondHorizon {
        t_ms: u64,
        horizon_ms: u64,
    },
    /// Fewer than two online producers leave the bounds undefined.
    DegenerateBounds,
    BadSchedule,
}

impl fmt::Display for NetworkError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NetworkError::NonPositiveSpeed { speed } => {
                write!(f, "link speed must be positive, got {speed}")
            }
            NetworkError::BeyondHorizon { t_ms, horizon_ms } => {
                write!(
                    f,
                    "query at {t_ms}ms beyond schedule horizon {horizon_ms}ms"
                )
            }
            NetworkError::DegenerateBounds => {
                write!(f, "need at least two online producers for network bounds")
            }
            NetworkError::BadSchedule => write!(f, "malformed schedule"),
        }
    }
}

/// Wire time in whole milliseconds (ceiling) for a payload at a link speed,
/// excluding propagation.
pub fn wire_time_ms(size_bytes: u64, speed_mbps: f64) -> Result<u64, NetworkError> {
    if !(speed_mbps > 0.0) {
        return Err(NetworkError::NonPositiveSpeed { speed: speed_mbps });
    }
    if size_bytes == 0 {
        return Ok(0);
    }
    let ms = 8.0 * size_bytes as f64 / (speed_mbps * 1e6) * 1000.0;
    Ok(libm::ceil(ms) as u64)
}

/// Full delivery delay: ceil(wire time) plus the fixed propagation delay.
pub fn transfer_time_ms(
    size_bytes: u64,
    speed_mbps: f64,
    propagation_ms: u64,
) -> Result<u64, NetworkError> {
    Ok(wire_time_ms(size_bytes, speed_mbps)? + propagation_ms)
}

/// Piecewise-constant per-link speed schedule.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkSchedule {
    nodes: u16,
    interval_ms: u64,
    /// One row-major K×K matrix per interval; the diagonal is unused.
    intervals: Vec<Vec<f64>>,
}

impl NetworkSchedule {
    pub fn new(
        nodes: u16,
        interval_ms: u64,
        intervals: Vec<Vec<f64>>,
    ) -> Result<Self, NetworkError> {
        if nodes == 0 || interval_ms == 0 || intervals.is_empty() {
            return Err(NetworkError::BadSchedule);
        }
        let k = nodes as usize;
        for matrix in &intervals {
            if matrix.len() != k * k {
                return Err(NetworkError::BadSchedule);
            }
            for (i, &speed) in matrix.iter().enumerate() {
                if i / k != i % k && !(speed > 0.0) {
                    return Err(NetworkError::NonPositiveSpeed { speed });
                }
            }
        }
        Ok(NetworkSchedule {
            nodes,
            interval_ms,
            intervals,
        })
    }

    pub fn nodes(&self) -> u16 {
        self.nodes
    }

    pub fn interval_ms(&self) -> u64 {
        self.interval_ms
    }

    pub fn intervals(&self) -> &[Vec<f64>] {
        &self.intervals
    }

    pub fn horizon_ms(&self) -> u64 {
        self.interval_ms * self.intervals.len() as u64
    }

    /// Speed of the directed link at `t`. Intervals are half-open
    /// `[k*TI, (k+1)*TI)`; querying past the schedule is an error.
    pub fn speed_at(&self, from: NodeId, to: NodeId, t: SimTime) -> Result<f64, NetworkError> {
        let idx = (t.millis() / self.interval_ms) as usize;
        if idx >= self.intervals.len() {
            return Err(NetworkError::BeyondHorizon {
                t_ms: t.millis(),
                horizon_ms: self.horizon_ms(),
            });
        }
        Ok(self.intervals[idx][from.index() * self.nodes as usize + to.index()])
    }

    /// Like `speed_at` but the last interval extends past the horizon.
    /// Used by the simulator for work that straddles the end of a run.
    pub fn speed_at_clamped(&self, from: NodeId, to: NodeId, t: SimTime) -> f64 {
        let idx = ((t.millis() / self.interval_ms) as usize).min(self.intervals.len() - 1);
        self.intervals[idx][from.index() * self.nodes as usize + to.index()]
    }
}

/// One node outage, half-open `[from, until)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Outage {
    pub node: NodeId,
    pub from: SimTime,
    pub until: SimTime,
}

/// Per-node outage windows; a node's outages never overlap.
#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FailureSchedule {
    outages: Vec<Outage>,
}

impl FailureSchedule {
    pub fn new(mut outages: Vec<Outage>) -> Result<Self, NetworkError> {
        outages.sort_by_key(|o| (o.node, o.from));
        for pair in outages.windows(2) {
            if pair[0].node == pair[1].node && pair[1].from < pair[0].until {
                return Err(NetworkError::BadSchedule);
            }
        }
        for o in &outages {
            if o.until < o.from {
                return Err(NetworkError::BadSchedule);
            }
        }
        Ok(FailureSchedule { outages })
    }

    pub fn none() -> Self {
        FailureSchedule::default()
    }

    pub fn outages(&self) -> &[Outage] {
        &self.outages
    }

    pub fn is_empty(&self) -> bool {
        self.outages.is_empty()
    }

    pub fn is_online(&self, node: NodeId, t: SimTime) -> bool {
        !self
            .outages
            .iter()
            .any(|o| o.node == node && t >= o.from && t < o.until)
    }

    /// Earliest instant at or after `t` when the node is online. Chained
    /// back-to-back outages are skipped over.
    pub fn next_online_at(&self, node: NodeId, t: SimTime) -> SimTime {
        let mut at = t;
        loop {
            match self
                .outages
                .iter()
                .find(|o| o.node == node && at >= o.from && at < o.until)
            {
                Some(o) => at = o.until,
                None => return at,
            }
        }
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

/// Ground-truth network bounds at `t`: min and max link speed over ordered
/// pairs of distinct online producers, rounded half-away-from-zero.
pub fn true_bounds(
    net: &NetworkSchedule,
    failures: &FailureSchedule,
    t: SimTime,
    producers: &[NodeId],
) -> Result<(u32, u32), NetworkError> {
    let online: Vec<NodeId> = producers
        .iter()
        .copied()
        .filter(|&p| failures.is_online(p, t))
        .collect();
    if online.len() < 2 {
        return Err(NetworkError::DegenerateBounds);
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &a in &online {
        for &b in &online {
            if a == b {
                continue;
            }
            let s = net.speed_at(a, b, t)?;
            lo = lo.min(s);
            hi = hi.max(s);
        }
    }
    Ok((round_half_away(lo), round_half_away(hi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn t(ms: u64) -> SimTime {
        SimTime::from_millis(ms)
    }

    fn uniform_schedule(nodes: u16, interval_ms: u64, speeds: &[f64]) -> NetworkSchedule {
        let k = nodes as usize;
        let intervals = speeds.iter().map(|&s| vec![s; k * k]).collect();
        NetworkSchedule::new(nodes, interval_ms, intervals).unwrap()
    }

    #[test]
    fn transfer_time_examples() {
        assert_eq!(transfer_time_ms(1_000_000, 8.0, 5).unwrap(), 1005);
        assert_eq!(transfer_time_ms(0, 8.0, 5).unwrap(), 5);
        // 256 B at 1 Mbps: 2.048 ms of wire time, ceiled to 3.
        assert_eq!(transfer_time_ms(256, 1.0, 5).unwrap(), 8);
    }

    #[test]
    fn non_positive_speed_rejected() {
        assert!(transfer_time_ms(100, 0.0, 5).is_err());
        assert!(transfer_time_ms(100, -1.0, 5).is_err());
    }

    #[test]
    fn speed_lookup_and_boundaries() {
        let net = uniform_schedule(2, 1000, &[3.0, 7.0]);
        let (a, b) = (NodeId(0), NodeId(1));
        assert_eq!(net.speed_at(a, b, t(500)).unwrap(), 3.0);
        // Interval boundary belongs to the starting interval.
        assert_eq!(net.speed_at(a, b, t(1000)).unwrap(), 7.0);
        assert_eq!(net.speed_at(a, b, t(1999)).unwrap(), 7.0);
        assert!(net.speed_at(a, b, t(2000)).is_err());
        assert_eq!(net.speed_at_clamped(a, b, t(50_000)), 7.0);
    }

    #[test]
    fn speed_constant_within_interval() {
        let net = uniform_schedule(2, 1000, &[4.5, 9.0]);
        for ms in (0..1000).step_by(97) {
            assert_eq!(net.speed_at(NodeId(0), NodeId(1), t(ms)).unwrap(), 4.5);
        }
    }

    #[test]
    fn outage_membership_half_open() {
        let sched = FailureSchedule::new(vec![Outage {
            node: NodeId(2),
            from: t(10_000),
            until: t(20_000),
        }])
        .unwrap();
        assert!(!sched.is_online(NodeId(2), t(15_000)));
        assert!(sched.is_online(NodeId(2), t(20_000)));
        assert!(sched.is_online(NodeId(2), t(9_999)));
        assert!(sched.is_online(NodeId(0), t(15_000)));
    }

    #[test]
    fn overlapping_outages_rejected() {
        let result = FailureSchedule::new(vec![
            Outage {
                node: NodeId(0),
                from: t(0),
                until: t(5000),
            },
            Outage {
                node: NodeId(0),
                from: t(4000),
                until: t(9000),
            },
        ]);
        assert!(result.is_err());
    }

    #[test]
    fn next_online_skips_adjacent_outages() {
        let sched = FailureSchedule::new(vec![
            Outage {
                node: NodeId(1),
                from: t(100),
                until: t(200),
            },
            Outage {
                node: NodeId(1),
                from: t(200),
                until: t(300),
            },
        ])
        .unwrap();
        assert_eq!(sched.next_online_at(NodeId(1), t(150)), t(300));
        assert_eq!(sched.next_online_at(NodeId(1), t(50)), t(50));
    }

    #[test]
    fn bounds_round_half_away() {
        let producers: Vec<NodeId> = (0..3).map(NodeId).collect();
        let net = uniform_schedule(3, 1000, &[7.4]);
        let none = FailureSchedule::none();
        assert_eq!(true_bounds(&net, &none, t(0), &producers).unwrap(), (7, 7));

        // Mixed 2.6 / 9.5 links round to (3, 10).
        let k = 3usize;
        let mut matrix = vec![2.6; k * k];
        matrix[1] = 9.5;
        let net = NetworkSchedule::new(3, 1000, vec![matrix]).unwrap();
        assert_eq!(true_bounds(&net, &none, t(0), &producers).unwrap(), (3, 10));
    }

    #[test]
    fn bounds_exclude_offline_producers() {
        // Oracle: recompute the min/max from the raw matrix restricted to
        // online pairs, and compare.
        let k = 3usize;
        let producers: Vec<NodeId> = (0..3).map(NodeId).collect();
        let mut matrix = vec![5.0; k * k];
        // Node 2's links are the extremes; once offline they must drop out.
        matrix[2 * k] = 0.5;
        matrix[k + 2] = 40.0;
        let net = NetworkSchedule::new(3, 1000, vec![matrix.clone()]).unwrap();
        let none = FailureSchedule::none();
        assert_eq!(true_bounds(&net, &none, t(0), &producers).unwrap(), (1, 40));

        let down = FailureSchedule::new(vec![Outage {
            node: NodeId(2),
            from: t(0),
            until: t(1000),
        }])
        .unwrap();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for a in 0..2usize {
            for b in 0..2usize {
                if a != b {
                    lo = lo.min(matrix[a * k + b]);
                    hi = hi.max(matrix[a * k + b]);
                }
            }
        }
        assert_eq!(
            true_bounds(&net, &down, t(0), &producers).unwrap(),
            (libm::round(lo) as u32, libm::round(hi) as u32)
        );
    }

    #[test]
    fn bounds_need_two_online() {
        let net = uniform_schedule(2, 1000, &[5.0]);
        let down = FailureSchedule::new(vec![Outage {
            node: NodeId(1),
            from: t(0),
            until: t(1000),
        }])
        .unwrap();
        let producers = vec![NodeId(0), NodeId(1)];
        assert_eq!(
            true_bounds(&net, &down, t(0), &producers),
            Err(NetworkError::DegenerateBounds)
        );
    }

    proptest! {
        // Slower never beats faster, bigger never beats smaller.
        #[test]
        fn transfer_monotonicity(
            size in 1u64..1_000_000,
            extra in 0u64..1_000_000,
            speed in 0.1f64..100.0,
            faster in 0.0f64..100.0,
        ) {
            let base = transfer_time_ms(size, speed, 5).unwrap();
            prop_assert!(transfer_time_ms(size + extra, speed, 5).unwrap() >= base);
            prop_assert!(transfer_time_ms(size, speed + faster, 5).unwrap() <= base);
        }

        #[test]
        fn bounds_ordered(speeds in proptest::collection::vec(0.1f64..50.0, 9)) {
            let net = NetworkSchedule::new(3, 1000, vec![speeds]).unwrap();
            let producers: Vec<NodeId> = (0..3).map(NodeId).collect();
            let (lo, hi) = true_bounds(&net, &FailureSchedule::none(), t(0), &producers).unwrap();
            prop_assert!(lo <= hi);
        }
    }
}
