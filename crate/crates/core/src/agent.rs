//! Tabular Q-learning over the twin state.
//!
//! Rewards are negative window latencies, so maximizing Q minimizes
//! latency. Missing entries read as `(q = 0, visits = 0)`.

use alloc::collections::BTreeMap;
use core::fmt;

use crate::consensus::ProtocolId;
use crate::rng::RngStream;
use crate::twin::StateKey;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentError {
    NonFiniteReward,
    InvalidConfig(&'static str),
}

impl fmt::Display for AgentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AgentError::NonFiniteReward => write!(f, "reward must be finite"),
            AgentError::InvalidConfig(what) => write!(f, "invalid agent config: {what}"),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct QEntry {
    pub q: f64,
    pub visits: u32,
}

/// Learned action values keyed by `(state, action)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QTable {
    entries: BTreeMap<(StateKey, ProtocolId), QEntry>,
}

impl QTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entry(&self, state: StateKey, action: ProtocolId) -> QEntry {
        self.entries
            .get(&(state, action))
            .copied()
            .unwrap_or_default()
    }

    pub fn q(&self, state: StateKey, action: ProtocolId) -> f64 {
        self.entry(state, action).q
    }

    /// Visits summed over both actions; below the unseen threshold the
    /// state counts as unexplored.
    pub fn state_visits(&self, state: StateKey) -> u32 {
        ProtocolId::ALL
            .iter()
            .map(|&a| self.entry(state, a).visits)
            .sum()
    }

    pub fn best_q(&self, state: StateKey) -> f64 {
        let pbft = self.q(state, ProtocolId::Pbft);
        let bigfoot = self.q(state, ProtocolId::Bigfoot);
        pbft.max(bigfoot)
    }

    /// Greedy action; exact ties resolve to PBFT (the conservative choice).
    pub fn greedy(&self, state: StateKey) -> ProtocolId {
        if self.q(state, ProtocolId::Bigfoot) > self.q(state, ProtocolId::Pbft) {
            ProtocolId::Bigfoot
        } else {
            ProtocolId::Pbft
        }
    }

    /// One Bellman update:
    /// `Q(s,a) += alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`.
    pub fn update(
        &mut self,
        state: StateKey,
        action: ProtocolId,
        reward: f64,
        next_state: StateKey,
        alpha: f64,
        gamma: f64,
    ) -> Result<(), AgentError> {
        if !reward.is_finite() {
            return Err(AgentError::NonFiniteReward);
        }
        let target = reward + gamma * self.best_q(next_state);
        let entry = self.entries.entry((state, action)).or_default();
        entry.q += alpha * (target - entry.q);
        entry.visits += 1;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries in key order, for dumps and diffing.
    pub fn iter(&self) -> impl Iterator<Item = (&(StateKey, ProtocolId), &QEntry)> {
        self.entries.iter()
    }

    pub fn insert_raw(&mut self, state: StateKey, action: ProtocolId, entry: QEntry) {
        self.entries.insert((state, action), entry);
    }
}

/// How a decision was made.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecisionSource {
    QGreedy,
    QExplore,
    WhatIfFallback,
    /// Fixed-protocol baseline.
    Static,
    /// Simulation-only optimiser.
    WhatIf,
}

impl DecisionSource {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionSource::QGreedy => "q-greedy",
            DecisionSource::QExplore => "q-explore",
            DecisionSource::WhatIfFallback => "what-if-fallback",
            DecisionSource::Static => "static",
            DecisionSource::WhatIf => "what-if",
        }
    }
}

/// Epsilon-greedy action selection over the two protocols.
pub fn select_action(
    table: &QTable,
    state: StateKey,
    epsilon: f64,
    rng: &mut RngStream,
) -> (ProtocolId, DecisionSource) {
    if epsilon > 0.0 && rng.unit() < epsilon {
        let action = if rng.bernoulli(0.5) {
            ProtocolId::Pbft
        } else {
            ProtocolId::Bigfoot
        };
        (action, DecisionSource::QExplore)
    } else {
        (table.greedy(state), DecisionSource::QGreedy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AgentConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub epsilon_decay: f64,
    pub epsilon_floor: f64,
    /// States with fewer total visits than this are "unseen" and divert to
    /// the what-if fallback.
    pub unseen_threshold: u32,
    /// Seed replicates per what-if evaluation.
    pub whatif_replicates: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            alpha: 0.1,
            gamma: 0.9,
            epsilon: 0.1,
            epsilon_decay: 0.995,
            epsilon_floor: 0.01,
            unseen_threshold: 1,
            whatif_replicates: 3,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(AgentError::InvalidConfig("alpha must be in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(AgentError::InvalidConfig("gamma must be in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(AgentError::InvalidConfig("epsilon must be in [0, 1]"));
        }
        if self.whatif_replicates == 0 {
            return Err(AgentError::InvalidConfig("need at least one replicate"));
        }
        Ok(())
    }

    /// Exploration rate for a training episode.
    pub fn epsilon_for_episode(&self, episode: u32) -> f64 {
        let mut eps = self.epsilon;
        for _ in 0..episode {
            eps *= self.epsilon_decay;
        }
        eps.max(self.epsilon_floor)
    }
}
