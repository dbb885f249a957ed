//! Per-peer commit engine and the MVCC validity rule.
//!
//! Phase 1 is VSCC plus private-data fetch; phase 2 is MVCC, block store and
//! state-db write. Serial mode runs `p1(b), p2(b), p1(b+1), ...`. Pipelined
//! mode lets phase 1 run ahead while keeping phase 2 strictly in block order.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::dist::DistributionSpec;
use crate::error::{FieldError, IntegrityError};
use crate::kernel::Seconds;
use crate::PeerId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommitMode {
    #[default]
    Serial,
    Pipelined,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FetchMode {
    /// Remote fetch for the whole block if any transaction's data is missing.
    #[default]
    AnyMissing,
    /// Blend local and remote samples by the fraction of missing data.
    Interpolated,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitLatencyModel {
    pub vscc: DistributionSpec,
    pub pvt_fetch_local: DistributionSpec,
    pub pvt_fetch_remote: DistributionSpec,
    pub mvcc: DistributionSpec,
    pub block_store: DistributionSpec,
    pub statedb: DistributionSpec,
    /// Added to the state-db write once per transaction in the block.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub statedb_per_tx: Option<DistributionSpec>,
    #[serde(default = "one")]
    pub vscc_core_scale: f64,
    #[serde(default)]
    pub fetch_mode: FetchMode,
}

impl CommitLatencyModel {
    /// Every stage constant zero.
    pub fn zero() -> Self {
        let z = DistributionSpec::zero();
        Self {
            vscc: z.clone(),
            pvt_fetch_local: z.clone(),
            pvt_fetch_remote: z.clone(),
            mvcc: z.clone(),
            block_store: z.clone(),
            statedb: z,
            statedb_per_tx: None,
            vscc_core_scale: 1.0,
            fetch_mode: FetchMode::AnyMissing,
        }
    }

    /// Constant phase durations, all of phase 1 in VSCC and all of phase 2
    /// in the state-db write.
    pub fn constant_phases(p1: Seconds, p2: Seconds) -> Self {
        Self {
            vscc: DistributionSpec::constant(p1),
            statedb: DistributionSpec::constant(p2),
            ..Self::zero()
        }
    }

    pub fn validate(&self, errors: &mut Vec<FieldError>) {
        let stages = [
            ("commit_model.vscc", &self.vscc),
            ("commit_model.pvt_fetch_local", &self.pvt_fetch_local),
            ("commit_model.pvt_fetch_remote", &self.pvt_fetch_remote),
            ("commit_model.mvcc", &self.mvcc),
            ("commit_model.block_store", &self.block_store),
            ("commit_model.statedb", &self.statedb),
        ];
        for (path, d) in stages {
            d.validate(path, errors);
        }
        if let Some(d) = &self.statedb_per_tx {
            d.validate("commit_model.statedb_per_tx", errors);
        }
        if !(self.vscc_core_scale.is_finite() && self.vscc_core_scale > 0.0) {
            errors.push(FieldError::new(
                "commit_model.vscc_core_scale",
                "must be > 0",
            ));
        }
    }

    /// Expected phase-1 and phase-2 durations for a block of `size`
    /// transactions, assuming the given fetch path.
    pub fn mean_phases(&self, size: u32, remote: bool) -> (Seconds, Seconds) {
        let fetch = if remote {
            &self.pvt_fetch_remote
        } else {
            &self.pvt_fetch_local
        };
        let p1 = self.vscc.mean() * self.vscc_core_scale + fetch.mean();
        let per_tx = self.statedb_per_tx.as_ref().map_or(0.0, |d| d.mean());
        let p2 = self.mvcc.mean()
            + self.block_store.mean()
            + self.statedb.mean()
            + per_tx * f64::from(size);
        (p1, p2)
    }
}

/// Commit throughput of a saturated peer with fixed phase durations.
pub fn steady_state_tps(p1: Seconds, p2: Seconds, block_size: u32, mode: CommitMode) -> f64 {
    let per_block = match mode {
        CommitMode::Serial => p1 + p2,
        CommitMode::Pipelined => p1.max(p2),
    };
    f64::from(block_size) / per_block
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub block_num: u64,
    pub delivered_at: Seconds,
    pub phase1_start: Seconds,
    pub phase1_end: Seconds,
    pub phase2_start: Seconds,
    pub phase2_end: Seconds,
    pub remote_fetch: bool,
}

impl PhaseTiming {
    pub fn p1_duration(&self) -> Seconds {
        self.phase1_end - self.phase1_start
    }

    pub fn p2_duration(&self) -> Seconds {
        self.phase2_end - self.phase2_start
    }

    pub fn time_ratio(&self) -> f64 {
        self.p1_duration() / self.p2_duration()
    }

    pub fn queue_delay(&self) -> Seconds {
        self.phase1_start - self.delivered_at
    }
}

/// Position of a transaction in the global ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LedgerPos {
    pub block: u64,
    pub index: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParentState {
    None,
    /// The parent will never reach the ledger.
    Dropped,
    /// Not yet in any block.
    Unordered,
    At(LedgerPos),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Validity {
    Valid,
    InvalidMvcc,
}

/// What the dependent transaction is checked against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MvccModel {
    /// The parent must precede the child in ledger order.
    #[default]
    LedgerOrder,
    /// The parent must already be committed at the endorser when the child
    /// is simulated, otherwise the child read a stale version.
    StaleRead,
}

/// Valid iff there is no parent, the parent never reaches the ledger, or the
/// parent sits strictly before `visible_before`.
pub fn mvcc_validate(parent: ParentState, visible_before: LedgerPos) -> Validity {
    match parent {
        ParentState::None | ParentState::Dropped => Validity::Valid,
        ParentState::Unordered => Validity::InvalidMvcc,
        ParentState::At(pos) if pos < visible_before => Validity::Valid,
        ParentState::At(_) => Validity::InvalidMvcc,
    }
}

/// For [`MvccModel::StaleRead`]: everything in blocks up to `read_height`
/// is visible.
pub fn stale_read_bound(read_height: u64) -> LedgerPos {
    LedgerPos {
        block: read_height + 1,
        index: 0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Start {
    Phase1(u64),
    Phase2(u64),
}

/// Block bookkeeping for one peer. The caller samples durations and
/// schedules completion events; this only decides what may start.
#[derive(Debug, Clone)]
pub struct CommitScheduler {
    peer: PeerId,
    mode: CommitMode,
    delivered: u64,
    next_p1: u64,
    p1_running: Option<u64>,
    p1_done_upto: u64,
    p2_running: Option<u64>,
    committed: u64,
    paused: bool,
}

impl CommitScheduler {
    pub fn new(peer: PeerId, mode: CommitMode) -> Self {
        Self {
            peer,
            mode,
            delivered: 0,
            next_p1: 1,
            p1_running: None,
            p1_done_upto: 0,
            p2_running: None,
            committed: 0,
            paused: false,
        }
    }

    pub fn height(&self) -> u64 {
        self.committed
    }

    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    pub fn set_paused(&mut self, paused: bool) {
        self.paused = paused;
    }

    pub fn is_idle(&self) -> bool {
        self.p1_running.is_none() && self.p2_running.is_none()
    }

    pub fn deliver(&mut self, block_num: u64) {
        debug_assert_eq!(block_num, self.delivered + 1);
        self.delivered = block_num;
    }

    /// Next phase that may begin now, if any. Phase 2 is preferred so the
    /// ledger advances as early as possible.
    pub fn next_start(&self) -> Option<Start> {
        let next_commit = self.committed + 1;
        if self.p2_running.is_none() && !self.paused && next_commit <= self.p1_done_upto {
            return Some(Start::Phase2(next_commit));
        }
        let p1_ready = self.p1_running.is_none() && self.next_p1 <= self.delivered;
        let allowed = match self.mode {
            CommitMode::Pipelined => true,
            CommitMode::Serial => self.p2_running.is_none() && self.p1_done_upto == self.committed,
        };
        (p1_ready && allowed).then_some(Start::Phase1(self.next_p1))
    }

    pub fn begin_phase1(&mut self, block: u64) {
        debug_assert_eq!(block, self.next_p1);
        self.p1_running = Some(block);
        self.next_p1 += 1;
    }

    pub fn on_phase1_done(&mut self, block: u64) -> Result<(), IntegrityError> {
        if self.p1_running != Some(block) {
            return Err(IntegrityError::UnexpectedCompletion {
                peer: self.peer,
                block,
                event: "phase 1",
            });
        }
        self.p1_running = None;
        self.p1_done_upto = block;
        Ok(())
    }

    pub fn begin_phase2(&mut self, block: u64) -> Result<(), IntegrityError> {
        if block != self.committed + 1 || self.p2_running.is_some() {
            return Err(IntegrityError::Phase2OutOfOrder {
                peer: self.peer,
                attempted: block,
                height: self.committed,
            });
        }
        if block > self.p1_done_upto {
            return Err(IntegrityError::Phase2BeforePhase1 {
                peer: self.peer,
                block,
            });
        }
        if self.paused {
            return Err(IntegrityError::CommitWhilePaused {
                peer: self.peer,
                block,
            });
        }
        self.p2_running = Some(block);
        Ok(())
    }

    pub fn on_phase2_done(&mut self, block: u64) -> Result<(), IntegrityError> {
        if self.p2_running != Some(block) {
            return Err(IntegrityError::UnexpectedCompletion {
                peer: self.peer,
                block,
                event: "phase 2",
            });
        }
        self.p2_running = None;
        self.committed = block;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b
    }

    #[test]
    fn steady_state_examples() {
        assert!(
            rel(
                steady_state_tps(4.404, 1.590, 4000, CommitMode::Pipelined),
                908.245
            ) < 0.01
        );
        assert!(
            rel(
                steady_state_tps(4.404, 1.590, 4000, CommitMode::Serial),
                668.877
            ) < 0.01
        );
        assert_eq!(steady_state_tps(2.0, 2.0, 4000, CommitMode::Serial), 1000.0);
        assert_eq!(
            steady_state_tps(2.0, 2.0, 4000, CommitMode::Pipelined),
            2000.0
        );
        assert!(
            rel(
                steady_state_tps(2.983, 1.511, 4000, CommitMode::Pipelined),
                1340.464
            ) < 0.01
        );
        assert!(
            rel(
                steady_state_tps(1.54, 1.51, 4000, CommitMode::Pipelined),
                2581.0
            ) < 0.02
        );
    }

    #[test]
    fn bottleneck_flips_to_phase_two() {
        let a = steady_state_tps(1.4, 1.5, 4000, CommitMode::Pipelined);
        let b = steady_state_tps(0.7, 1.5, 4000, CommitMode::Pipelined);
        assert_eq!(a, b);
    }

    #[test]
    fn mean_phases_of_constant_model() {
        let mut m = CommitLatencyModel::zero();
        m.mvcc = DistributionSpec::constant(0.133);
        m.block_store = DistributionSpec::constant(0.152);
        m.statedb = DistributionSpec::constant(0.824);
        let (_, p2) = m.mean_phases(4000, false);
        assert!((p2 - 1.109).abs() < 1e-12);
        let m = CommitLatencyModel {
            vscc: DistributionSpec::constant(2.376),
            pvt_fetch_remote: DistributionSpec::constant(2.028),
            ..CommitLatencyModel::zero()
        };
        assert!((m.mean_phases(1, true).0 - 4.404).abs() < 1e-12);
    }

    fn pos(block: u64, index: u32) -> LedgerPos {
        LedgerPos { block, index }
    }

    #[test]
    fn mvcc_examples() {
        let me = pos(10, 4);
        assert_eq!(
            mvcc_validate(ParentState::At(pos(7, 0)), me),
            Validity::Valid
        );
        assert_eq!(mvcc_validate(ParentState::None, me), Validity::Valid);
        assert_eq!(mvcc_validate(ParentState::Dropped, me), Validity::Valid);
        assert_eq!(
            mvcc_validate(ParentState::Unordered, me),
            Validity::InvalidMvcc
        );
        assert_eq!(
            mvcc_validate(ParentState::At(pos(10, 6)), me),
            Validity::InvalidMvcc
        );
        assert_eq!(
            mvcc_validate(ParentState::At(pos(10, 3)), me),
            Validity::Valid
        );
    }

    #[test]
    fn same_block_positions_brute_force() {
        // Three transactions in one block where tx k depends on tx dep[k].
        // The positional rule must agree with "parent appears earlier in the
        // permuted order" for all 6 orderings.
        let deps: [Option<usize>; 3] = [None, Some(0), Some(1)];
        let perms = [
            [0, 1, 2],
            [0, 2, 1],
            [1, 0, 2],
            [1, 2, 0],
            [2, 0, 1],
            [2, 1, 0],
        ];
        for perm in perms {
            let at = |tx: usize| pos(5, perm.iter().position(|&t| t == tx).unwrap() as u32);
            for (tx, dep) in deps.iter().enumerate() {
                let parent = dep.map_or(ParentState::None, |p| ParentState::At(at(p)));
                let expect = match *dep {
                    None => true,
                    Some(p) => at(p).index < at(tx).index,
                };
                let got = mvcc_validate(parent, at(tx)) == Validity::Valid;
                assert_eq!(got, expect, "perm {perm:?} tx {tx}");
            }
        }
    }

    #[test]
    fn parent_in_same_block_uncommitted_under_stale_read() {
        // Both transactions were simulated against height 3; the parent
        // lands in block 4 with the child, so the child read a stale value.
        let bound = stale_read_bound(3);
        assert_eq!(
            mvcc_validate(ParentState::At(pos(4, 0)), bound),
            Validity::InvalidMvcc
        );
        assert_eq!(
            mvcc_validate(ParentState::At(pos(3, 9)), bound),
            Validity::Valid
        );
    }

    fn drive(mode: CommitMode, blocks: u64) -> Vec<Start> {
        let mut s = CommitScheduler::new(PeerId(0), mode);
        for b in 1..=blocks {
            s.deliver(b);
        }
        let mut log = vec![];
        while s.height() < blocks {
            // Start everything possible, then complete in start order.
            let mut started = vec![];
            while let Some(st) = s.next_start() {
                match st {
                    Start::Phase1(b) => s.begin_phase1(b),
                    Start::Phase2(b) => s.begin_phase2(b).unwrap(),
                }
                started.push(st);
            }
            for st in &started {
                match *st {
                    Start::Phase1(b) => s.on_phase1_done(b).unwrap(),
                    Start::Phase2(b) => s.on_phase2_done(b).unwrap(),
                }
            }
            log.extend(started);
        }
        log
    }

    #[test]
    fn serial_alternates_phases() {
        use Start::*;
        let log = drive(CommitMode::Serial, 3);
        assert_eq!(
            log,
            [
                Phase1(1),
                Phase2(1),
                Phase1(2),
                Phase2(2),
                Phase1(3),
                Phase2(3)
            ]
        );
    }

    #[test]
    fn pipelined_overlaps_next_phase_one() {
        use Start::*;
        let log = drive(CommitMode::Pipelined, 3);
        assert_eq!(
            log,
            [
                Phase1(1),
                Phase2(1),
                Phase1(2),
                Phase2(2),
                Phase1(3),
                Phase2(3)
            ]
        );
        let mut s = CommitScheduler::new(PeerId(0), CommitMode::Pipelined);
        s.deliver(1);
        s.deliver(2);
        s.begin_phase1(1);
        s.on_phase1_done(1).unwrap();
        assert_eq!(s.next_start(), Some(Phase2(1)));
        s.begin_phase2(1).unwrap();
        assert_eq!(s.next_start(), Some(Phase1(2)));
    }

    #[test]
    fn out_of_order_phase_two_is_an_integrity_error() {
        let mut s = CommitScheduler::new(PeerId(3), CommitMode::Pipelined);
        for b in 1..=3 {
            s.deliver(b);
            s.begin_phase1(b);
            s.on_phase1_done(b).unwrap();
        }
        assert!(matches!(
            s.begin_phase2(2),
            Err(IntegrityError::Phase2OutOfOrder {
                attempted: 2,
                height: 0,
                ..
            })
        ));
        s.set_paused(true);
        assert_eq!(s.next_start(), None);
        assert!(matches!(
            s.begin_phase2(1),
            Err(IntegrityError::CommitWhilePaused { .. })
        ));
    }
}
