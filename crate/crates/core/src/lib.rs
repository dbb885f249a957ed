//! Deterministic discrete-event model of a permissioned ledger's
//! endorse → order → commit pipeline.
//!
//! The crate is `no_std` (it needs `alloc`). Everything that touches the
//! filesystem, the clock or the command line lives in the `fabric-sim`
//! companion crate.
//!
//! Module map:
//!
//! * [`kernel`]: virtual clock and `(fire_at, seq)`-ordered event queue.
//! * [`rng`] and [`dist`]: named random substreams and latency distributions.
//! * [`workload`]: client arrivals and in-flight dependency injection.
//! * [`endorsement`]: endorser eligibility, routing, admission and private
//!   data dissemination with quorum acknowledgement.
//! * [`ordering`]: the single logical block cutter.
//! * [`commit`]: per-peer serial or two-phase pipelined commit and the MVCC
//!   validity rule.
//! * [`coordination`]: strategic waiting (pause leaders, boost laggers).
//! * [`metrics`]: counters, summaries and derived ratios.
//! * [`sim`]: the engine wiring all of the above into one run.

#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod commit;
pub mod config;
pub mod coordination;
pub mod dist;
pub mod endorsement;
pub mod error;
pub mod kernel;
pub mod metrics;
pub mod ordering;
pub mod rng;
pub mod sim;
pub mod workload;

pub use config::ScenarioConfig;
pub use error::{FieldError, IntegrityError, SimError};
pub use kernel::Seconds;
pub use sim::{run, RunResult};

use core::fmt;
use serde::{Deserialize, Serialize};

/// Transaction identifier, dense and assigned in creation order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TxId(pub u32);

impl TxId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tx{}", self.0)
    }
}

/// Peer identifier, `0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PeerId(pub u16);

impl PeerId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for PeerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "p{}", self.0)
    }
}
