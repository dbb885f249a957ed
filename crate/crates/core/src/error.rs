use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use thiserror::Error;

use crate::kernel::ScheduleError;
use crate::{PeerId, TxId};

/// One config problem, addressed by a dotted field path.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl FieldError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// A violated simulation invariant. Any of these means the model (or a
/// deliberately injected fault) is broken, never that the workload was bad.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum IntegrityError {
    #[error("{peer} attempted phase 2 of block {attempted} while its height is {height}")]
    Phase2OutOfOrder {
        peer: PeerId,
        attempted: u64,
        height: u64,
    },
    #[error("{peer} attempted phase 2 of block {block} before its phase 1 finished")]
    Phase2BeforePhase1 { peer: PeerId, block: u64 },
    #[error("{peer} finished {event} for block {block} which was not running")]
    UnexpectedCompletion {
        peer: PeerId,
        block: u64,
        event: &'static str,
    },
    #[error("{peer} started phase 2 of block {block} while paused")]
    CommitWhilePaused { peer: PeerId, block: u64 },
    #[error("height gap grew from {before} to {after} while a pause was active")]
    GapGrewDuringPause { before: u64, after: u64 },
    #[error("boost requested for {lagger} while no leader is paused")]
    BoostWithoutPause { lagger: PeerId },
    #[error("{tx} routed to {peer} which was not eligible")]
    IneligibleEndorser { tx: TxId, peer: PeerId },
    #[error("{tx} validity differs between peers (block {block})")]
    ValidityMismatch { tx: TxId, block: u64 },
    #[error("conservation violated: {0}")]
    Conservation(String),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
}

/// Anything that stops a run.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid config: {}", join(.0))]
    Config(Vec<FieldError>),
    #[error("simulation integrity failure: {0}")]
    Integrity(#[from] IntegrityError),
}

fn join(errors: &[FieldError]) -> String {
    let mut out = String::new();
    for (i, e) in errors.iter().enumerate() {
        if i > 0 {
            out.push_str("; ");
        }
        out.push_str(&alloc::format!("{e}"));
    }
    out
}
