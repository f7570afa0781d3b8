//! Discrete-event core: a virtual clock plus an ordered event queue.
//!
//! Events fire in `(fire_at, seq)` order, where `seq` is the insertion
//! sequence number. The tie-break makes traces reproducible: two events at
//! the same instant fire in the order they were scheduled.

use alloc::collections::BinaryHeap;
use core::cmp::Ordering;
use core::fmt;

use crate::time::SimTime;

/// A scheduled event as handed to the handler.
#[derive(Debug)]
pub struct Scheduled<P> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: P,
}

struct HeapEntry<P> {
    fire_at: SimTime,
    seq: u64,
    payload: P,
}

impl<P> PartialEq for HeapEntry<P> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl<P> Eq for HeapEntry<P> {}

impl<P> PartialOrd for HeapEntry<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for HeapEntry<P> {
    // Reversed so the BinaryHeap pops the earliest (fire_at, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleError {
    /// Scheduling into the past signals a causality bug in the caller.
    InPast { now_ms: u64, fire_at_ms: u64 },
}

impl fmt::Display for ScheduleError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScheduleError::InPast { now_ms, fire_at_ms } => write!(
                f,
                "event scheduled in the past: fire_at {fire_at_ms}ms < now {now_ms}ms"
            ),
        }
    }
}

/// Event queue with a monotone virtual clock.
pub struct EventQueue<P> {
    heap: BinaryHeap<HeapEntry<P>>,
    now: SimTime,
    next_seq: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        EventQueue {
            heap: BinaryHeap::new(),
            now: SimTime::ZERO,
            next_seq: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Enqueue an event; returns its sequence number.
    pub fn schedule(&mut self, fire_at: SimTime, payload: P) -> Result<u64, ScheduleError> {
        if fire_at < self.now {
            return Err(ScheduleError::InPast {
                now_ms: self.now.millis(),
                fire_at_ms: fire_at.millis(),
            });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(HeapEntry {
            fire_at,
            seq,
            payload,
        });
        Ok(seq)
    }

    /// Pop the next event due at or before `limit`, advancing the clock to
    /// its fire time. Returns `None` when nothing further is due.
    pub fn pop_due(&mut self, limit: SimTime) -> Option<Scheduled<P>> {
        match self.heap.peek() {
            Some(entry) if entry.fire_at <= limit => {
                let entry = self.heap.pop().unwrap();
                self.now = entry.fire_at;
                Some(Scheduled {
                    fire_at: entry.fire_at,
                    seq: entry.seq,
                    payload: entry.payload,
                })
            }
            _ => None,
        }
    }

    /// Fire every event due up to and including `t`, in order, through
    /// `handler`. The handler may schedule further events. Returns the
    /// number of events fired; the clock ends exactly at `t`.
    pub fn run_until<F>(&mut self, t: SimTime, mut handler: F) -> usize
    where
        F: FnMut(&mut Self, Scheduled<P>),
    {
        assert!(t >= self.now, "run_until target precedes the clock");
        let mut fired = 0;
        while let Some(ev) = self.pop_due(t) {
            handler(self, ev);
            fired += 1;
        }
        self.now = t;
        fired
    }
}
