//! Core simulation library for a permissioned blockchain with switchable
//! consensus and a digital-twin control loop.
//!
//! The crate is `no_std` + `alloc`: everything in here is pure computation
//! over a virtual clock, so it can run anywhere. IO, file formats and the
//! CLI live in the companion `chaintwin-cli` crate.
//!
//! Layout mirrors the moving parts of the system:
//! - [`engine`]: virtual clock, ordered event queue, named random streams.
//! - [`chain`]: transactions, pools, blocks, ledgers and latency metrics.
//! - [`network`]: time-varying link speeds and node outage schedules.
//! - [`consensus`]: message-level PBFT and fast-path/fallback models.
//! - [`scenario`]: randomized workload and system-state generation.
//! - [`twin`]: state estimation from committed blocks (the sensing half).
//! - [`agent`]: tabular Q-learning.
//! - [`control`]: controllers, what-if evaluation and offline training.
//! - [`runner`]: the closed loop tying all of the above together.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod agent;
pub mod chain;
pub mod consensus;
pub mod control;
pub mod engine;
pub mod network;
pub mod rng;
pub mod runner;
pub mod scenario;
pub mod time;
pub mod twin;

pub use time::SimTime;
