//! One simulation run.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::commit::{
    mvcc_validate, stale_read_bound, CommitMode, CommitScheduler, FetchMode, LedgerPos, MvccModel,
    ParentState, PhaseTiming, Start, Validity,
};
use crate::config::{OnFull, ScenarioConfig};
use crate::coordination::{Coordinator, Effect, WaitEvent};
use crate::dist::DistributionSpec;
use crate::endorsement::{
    disseminate, eligible_count, is_eligible, LeaderKind, PeerCapacity, Route, Router,
};
use crate::error::{IntegrityError, SimError};
use crate::kernel::{Kernel, Seconds};
use crate::metrics::{LatencySummary, RunCounters, ThroughputSummary};
use crate::ordering::{Block, EnqueueOutcome, Orderer};
use crate::rng::RngStream;
use crate::workload::{assign_dependency, ClientArrivals, InFlightSet, TxStatus};
use crate::{PeerId, TxId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ev {
    Arrival { client: u32 },
    EndorseDone { tx: TxId },
    CutTimeout { generation: u64 },
    CutTick,
    Deliver { block: u64 },
    Phase1Done { peer: u16, block: u64, token: u32 },
    Phase2Done { peer: u16, block: u64, token: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Capacity,
    Quorum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    /// Workload exhausted and every queue empty before the horizon.
    Drained,
    Truncated,
}

/// Lifecycle of one transaction. Times that were never reached are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct TxRecord {
    pub client: u32,
    pub created_at: Seconds,
    pub parent: Option<TxId>,
    pub status: TxStatus,
    pub drop_reason: Option<DropReason>,
    pub endorser: Option<PeerId>,
    /// When the routing decision that led to endorsement (or the drop) was
    /// taken.
    pub routed_at: Seconds,
    pub endorse_start: Seconds,
    pub endorse_end: Seconds,
    pub ordered_at: Seconds,
    pub pos: Option<LedgerPos>,
    /// First commit at any peer (the leader's view).
    pub committed_at: Seconds,
    doomed: bool,
    validity: Option<Validity>,
    committed_peers: u16,
}

impl TxRecord {
    fn new(client: u32, created_at: Seconds, parent: Option<TxId>) -> Self {
        Self {
            client,
            created_at,
            parent,
            status: TxStatus::InFlight,
            drop_reason: None,
            endorser: None,
            routed_at: f64::NAN,
            endorse_start: f64::NAN,
            endorse_end: f64::NAN,
            ordered_at: f64::NAN,
            pos: None,
            committed_at: f64::NAN,
            doomed: false,
            validity: None,
            committed_peers: 0,
        }
    }

    pub fn e2e(&self) -> Option<Seconds> {
        (!self.committed_at.is_nan()).then_some(self.committed_at - self.created_at)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockRecord {
    pub block: Block,
    pub delivered_at: Seconds,
    pub first_commit: Option<(Seconds, PeerId)>,
    pub invalid: u32,
    /// Per peer; fields stay NaN for phases that never ran.
    pub timings: Vec<PhaseTiming>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub peers: usize,
    pub counters: RunCounters,
    pub txs: Vec<TxRecord>,
    pub blocks: Vec<BlockRecord>,
    pub waits: Vec<WaitEvent>,
    pub status: RunStatus,
    pub end_time: Seconds,
    pub heights: Vec<u64>,
    /// Fraction of `[0, end_time]` with at least two eligible endorsers.
    pub multi_eligible_fraction: f64,
}

struct PeerStreams {
    execute: RngStream,
    ack: RngStream,
    targets: RngStream,
    overhead: RngStream,
    vscc: RngStream,
    fetch_local: RngStream,
    fetch_remote: RngStream,
    mvcc: RngStream,
    block_store: RngStream,
    statedb: RngStream,
    statedb_per_tx: RngStream,
}

impl PeerStreams {
    fn new(seed: u64, p: usize) -> Self {
        let s = |what: &str| RngStream::new(seed, &format!("peer{p}.{what}"));
        Self {
            execute: s("execute"),
            ack: s("ack"),
            targets: s("targets"),
            overhead: s("overhead"),
            vscc: s("vscc"),
            fetch_local: s("fetch_local"),
            fetch_remote: s("fetch_remote"),
            mvcc: s("mvcc"),
            block_store: s("block_store"),
            statedb: s("statedb"),
            statedb_per_tx: s("statedb_per_tx"),
        }
    }
}

/// A phase in progress whose completion event can be moved.
#[derive(Debug, Clone, Copy)]
struct Running {
    block: u64,
    end: Seconds,
    token: u32,
}

struct PeerRt {
    busy: u32,
    buffer: VecDeque<TxId>,
    sched: CommitScheduler,
    streams: PeerStreams,
    scale: f64,
    commit_scale: f64,
    boost: f64,
    p1: Option<Running>,
    p2: Option<Running>,
    /// Remaining phase-2 time while paused mid-phase.
    suspended: Option<(u64, Seconds)>,
    next_token: u32,
}

impl PeerRt {
    fn token(&mut self) -> u32 {
        self.next_token = self.next_token.wrapping_add(1);
        self.next_token
    }
}

struct Engine<'a> {
    cfg: &'a ScenarioConfig,
    n: usize,
    cap: PeerCapacity,
    kernel: Kernel<Ev>,
    txs: Vec<TxRecord>,
    in_flight: InFlightSet,
    arrivals: Vec<ClientArrivals>,
    arrivals_left: u32,
    dep_rng: RngStream,
    router: Router,
    peers: Vec<PeerRt>,
    heights: Vec<u64>,
    orderer: Orderer,
    blocks: Vec<BlockRecord>,
    /// `data_at[tx * n + peer]`: when the peer holds the tx's private data.
    data_at: Vec<Seconds>,
    coordinator: Coordinator,
    pending: VecDeque<TxId>,
    counters: RunCounters,
    /// Transactions created but not yet endorsed or dropped.
    unsettled: u64,
    tick_armed: bool,
    eligible_now: usize,
    eligible_since: Seconds,
    multi_time: Seconds,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a ScenarioConfig) -> Self {
        let n = usize::from(cfg.peers.count);
        let seed = cfg.seed;
        let arrivals: Vec<ClientArrivals> = (0..cfg.workload.num_clients)
            .map(|c| ClientArrivals::new(&cfg.workload, c, seed))
            .collect();
        let peers = (0..n)
            .map(|p| PeerRt {
                busy: 0,
                buffer: VecDeque::new(),
                sched: CommitScheduler::new(PeerId(p as u16), cfg.commit_mode),
                streams: PeerStreams::new(seed, p),
                scale: cfg.peers.scale(p),
                commit_scale: cfg.peers.commit_scale(p),
                boost: 1.0,
                p1: None,
                p2: None,
                suspended: None,
                next_token: 0,
            })
            .collect();
        let expected = cfg.workload.expected_total().unwrap_or(0) as usize;
        let heights = vec![0; n];
        let eligible_now = eligible_count(&cfg.leader, &heights);
        Self {
            cfg,
            n,
            cap: cfg.peers.capacity(),
            kernel: Kernel::new(),
            txs: Vec::with_capacity(expected),
            in_flight: InFlightSet::new(),
            arrivals_left: arrivals.len() as u32,
            arrivals,
            dep_rng: RngStream::new(seed, "workload.dependency"),
            router: Router::new(),
            peers,
            heights,
            orderer: Orderer::new(cfg.cut_rule),
            blocks: Vec::new(),
            data_at: Vec::with_capacity(expected * n),
            coordinator: Coordinator::new(cfg.waiting.clone()),
            pending: VecDeque::new(),
            counters: RunCounters::default(),
            unsettled: 0,
            tick_armed: false,
            eligible_now,
            eligible_since: 0.0,
            multi_time: 0.0,
        }
    }

    fn schedule(&mut self, at: Seconds, ev: Ev) -> Result<(), IntegrityError> {
        self.kernel.schedule(at, ev)?;
        Ok(())
    }

    fn run(mut self) -> Result<RunResult, SimError> {
        for c in 0..self.arrivals.len() {
            self.next_arrival(c as u32)?;
        }
        if self.cfg.cut_rule.kind == crate::ordering::CutKind::DynamicTimeout {
            self.arm_tick()?;
        }
        let horizon = self.cfg.horizon;
        while let Some(ev) = self.kernel.pop_until(horizon) {
            self.handle(ev.kind)?;
        }
        let status = if self.kernel.pending() == 0 {
            RunStatus::Drained
        } else {
            self.kernel.advance_to(horizon);
            RunStatus::Truncated
        };
        let end_time = self.kernel.now();
        self.note_eligibility(end_time);
        for tx in &self.txs {
            match tx.status {
                TxStatus::InFlight => self.counters.unendorsed_at_horizon += 1,
                TxStatus::Endorsed => self.counters.endorsed_uncommitted += 1,
                _ => {}
            }
        }
        self.counters
            .check()
            .map_err(IntegrityError::Conservation)?;
        let multi_eligible_fraction = if end_time > 0.0 {
            self.multi_time / end_time
        } else {
            0.0
        };
        Ok(RunResult {
            peers: self.n,
            counters: self.counters,
            txs: self.txs,
            blocks: self.blocks,
            waits: self.coordinator.into_events(),
            status,
            end_time,
            heights: self.heights,
            multi_eligible_fraction,
        })
    }

    fn handle(&mut self, ev: Ev) -> Result<(), IntegrityError> {
        match ev {
            Ev::Arrival { client } => self.on_arrival(client),
            Ev::EndorseDone { tx } => self.on_endorse_done(tx),
            Ev::CutTimeout { generation } => {
                let now = self.kernel.now();
                match self.orderer.on_timeout(generation, now) {
                    Some(block) => self.on_cut(block),
                    None => Ok(()),
                }
            }
            Ev::CutTick => {
                self.tick_armed = false;
                let now = self.kernel.now();
                if let Some(block) = self.orderer.on_tick(now) {
                    self.on_cut(block)?;
                }
                if self.arrivals_left > 0 || self.unsettled > 0 {
                    self.arm_tick()?;
                }
                Ok(())
            }
            Ev::Deliver { block } => self.on_deliver(block),
            Ev::Phase1Done { peer, block, token } => self.on_phase1_done(peer, block, token),
            Ev::Phase2Done { peer, block, token } => self.on_phase2_done(peer, block, token),
        }
    }

    fn arm_tick(&mut self) -> Result<(), IntegrityError> {
        if !self.tick_armed {
            self.tick_armed = true;
            let at = self.kernel.now() + self.cfg.cut_rule.timeout;
            self.schedule(at, Ev::CutTick)?;
        }
        Ok(())
    }

    fn next_arrival(&mut self, client: u32) -> Result<(), IntegrityError> {
        match self.arrivals[client as usize].next() {
            Some(t) => self.schedule(t, Ev::Arrival { client }),
            None => {
                self.arrivals_left -= 1;
                Ok(())
            }
        }
    }

    // Endorsement -------------------------------------------------------

    fn on_arrival(&mut self, client: u32) -> Result<(), IntegrityError> {
        let now = self.kernel.now();
        let id = TxId(self.txs.len() as u32);
        let parent = assign_dependency(
            &self.in_flight,
            self.cfg.workload.dependency_prob,
            &mut self.dep_rng,
        );
        self.txs.push(TxRecord::new(client, now, parent));
        self.data_at
            .extend(core::iter::repeat_n(f64::INFINITY, self.n));
        self.in_flight.insert(id);
        self.counters.created += 1;
        self.unsettled += 1;
        self.next_arrival(client)?;
        let hold = self.cfg.peers.on_full == OnFull::Hold;
        if hold && !self.pending.is_empty() {
            self.pending.push_back(id);
            return Ok(());
        }
        if !self.dispatch(id)? {
            if hold {
                self.pending.push_back(id);
            } else {
                self.txs[id.index()].routed_at = now;
                self.drop_tx(id, DropReason::Capacity);
            }
        }
        Ok(())
    }

    /// Routes and admits `tx`. Returns false if every eligible peer is full.
    fn dispatch(&mut self, tx: TxId) -> Result<bool, IntegrityError> {
        let load: Vec<(u32, u32)> = self
            .peers
            .iter()
            .map(|p| (p.busy, p.buffer.len() as u32))
            .collect();
        let peer = match self
            .router
            .route(&self.cfg.leader, &self.heights, &load, &self.cap)
        {
            Route::Assigned(p) => p,
            Route::Dropped => return Ok(false),
        };
        if !is_eligible(&self.cfg.leader, &self.heights, peer) {
            return Err(IntegrityError::IneligibleEndorser { tx, peer });
        }
        let now = self.kernel.now();
        let rec = &mut self.txs[tx.index()];
        rec.routed_at = now;
        rec.endorser = Some(peer);
        if self.peers[peer.index()].busy < self.cap.concurrency {
            self.start_endorsement(peer, tx)?;
        } else {
            self.peers[peer.index()].buffer.push_back(tx);
        }
        Ok(true)
    }

    fn dispatch_pending(&mut self) -> Result<(), IntegrityError> {
        while let Some(&tx) = self.pending.front() {
            if !self.dispatch(tx)? {
                break;
            }
            self.pending.pop_front();
        }
        Ok(())
    }

    fn parent_state(&self, tx: TxId) -> ParentState {
        let Some(parent) = self.txs[tx.index()].parent else {
            return ParentState::None;
        };
        let p = &self.txs[parent.index()];
        if let Some(pos) = p.pos {
            ParentState::At(pos)
        } else if p.status == TxStatus::Dropped || p.doomed {
            ParentState::Dropped
        } else {
            ParentState::Unordered
        }
    }

    fn start_endorsement(&mut self, peer: PeerId, tx: TxId) -> Result<(), IntegrityError> {
        let now = self.kernel.now();
        let n = self.n;
        let cfg = self.cfg;
        let p = peer.index();
        let scales: Vec<f64> = (0..n).map(|i| cfg.peers.scale(i)).collect();
        let rt = &mut self.peers[p];
        rt.busy += 1;
        let exec = cfg.endorsement.execute.sample(&mut rt.streams.execute) * rt.scale;
        let ack_dist = &cfg.endorsement.ack;
        let ack_rng = &mut rt.streams.ack;
        let out = disseminate(
            &cfg.dissemination,
            peer,
            n,
            &mut rt.streams.targets,
            |target| ack_dist.sample(ack_rng) * scales[target.index()],
        );
        let overhead = cfg.endorsement.overhead.sample(&mut rt.streams.overhead) * rt.scale;
        let read_height = self.heights[p];

        let base = tx.index() * n;
        self.data_at[base + p] = now;
        if out.success {
            for &(target, offset) in &out.acked {
                self.data_at[base + target.index()] = now + exec + offset;
            }
        }
        let end = now + exec + out.wait + overhead;
        {
            let rec = &mut self.txs[tx.index()];
            rec.endorse_start = now;
            rec.endorse_end = end;
            rec.doomed = !out.success;
        }
        if cfg.mvcc == MvccModel::StaleRead {
            let v = mvcc_validate(self.parent_state(tx), stale_read_bound(read_height));
            self.txs[tx.index()].validity = Some(v);
        }
        self.schedule(end, Ev::EndorseDone { tx })
    }

    fn drop_tx(&mut self, tx: TxId, reason: DropReason) {
        let rec = &mut self.txs[tx.index()];
        rec.status = TxStatus::Dropped;
        rec.drop_reason = Some(reason);
        self.counters.dropped += 1;
        match reason {
            DropReason::Capacity => self.counters.dropped_capacity += 1,
            DropReason::Quorum => self.counters.dropped_quorum += 1,
        }
        self.unsettled -= 1;
        self.in_flight.remove(tx);
    }

    fn on_endorse_done(&mut self, tx: TxId) -> Result<(), IntegrityError> {
        let now = self.kernel.now();
        let peer = self.txs[tx.index()]
            .endorser
            .expect("endorsed tx has an endorser");
        self.peers[peer.index()].busy -= 1;
        if self.txs[tx.index()].doomed {
            self.drop_tx(tx, DropReason::Quorum);
        } else {
            self.txs[tx.index()].status = TxStatus::Endorsed;
            self.counters.endorsed += 1;
            self.unsettled -= 1;
            match self.orderer.enqueue_endorsed(tx, now) {
                EnqueueOutcome::Queued => {}
                EnqueueOutcome::StartTimer {
                    generation,
                    fire_at,
                } => self.schedule(fire_at, Ev::CutTimeout { generation })?,
                EnqueueOutcome::Cut(block) => self.on_cut(block)?,
            }
        }
        if let Some(next) = self.peers[peer.index()].buffer.pop_front() {
            self.start_endorsement(peer, next)?;
        }
        if !self.pending.is_empty() {
            self.dispatch_pending()?;
        }
        Ok(())
    }

    // Ordering ----------------------------------------------------------

    fn on_cut(&mut self, block: Block) -> Result<(), IntegrityError> {
        let now = self.kernel.now();
        let num = block.block_num;
        for (i, &tx) in block.txs.iter().enumerate() {
            let rec = &mut self.txs[tx.index()];
            rec.pos = Some(LedgerPos {
                block: num,
                index: i as u32,
            });
            rec.ordered_at = now;
        }
        if self.cfg.mvcc == MvccModel::LedgerOrder {
            for &tx in &block.txs {
                let me = self.txs[tx.index()].pos.expect("just ordered");
                let v = mvcc_validate(self.parent_state(tx), me);
                self.txs[tx.index()].validity = Some(v);
            }
        }
        if let Some((generation, at)) = self.orderer.pending_timer(now) {
            self.schedule(at, Ev::CutTimeout { generation })?;
        }
        let nan = f64::NAN;
        let blank = PhaseTiming {
            block_num: num,
            delivered_at: nan,
            phase1_start: nan,
            phase1_end: nan,
            phase2_start: nan,
            phase2_end: nan,
            remote_fetch: false,
        };
        self.blocks.push(BlockRecord {
            block,
            delivered_at: nan,
            first_commit: None,
            invalid: 0,
            timings: vec![blank; self.n],
        });
        self.schedule(now + self.cfg.ordering_overhead, Ev::Deliver { block: num })
    }

    fn on_deliver(&mut self, block: u64) -> Result<(), IntegrityError> {
        let now = self.kernel.now();
        let rec = &mut self.blocks[block as usize - 1];
        rec.delivered_at = now;
        for t in &mut rec.timings {
            t.delivered_at = now;
        }
        for p in 0..self.n {
            self.peers[p].sched.deliver(block);
            self.try_start(p)?;
        }
        Ok(())
    }

    // Commit ------------------------------------------------------------

    fn sample(dist: &DistributionSpec, rng: &mut RngStream) -> Seconds {
        if dist.is_zero() {
            0.0
        } else {
            dist.sample(rng)
        }
    }

    fn try_start(&mut self, p: usize) -> Result<(), IntegrityError> {
        while let Some(start) = self.peers[p].sched.next_start() {
            match start {
                Start::Phase1(b) => self.start_phase1(p, b)?,
                Start::Phase2(b) => self.start_phase2(p, b)?,
            }
        }
        Ok(())
    }

    fn start_phase1(&mut self, p: usize, b: u64) -> Result<(), IntegrityError> {
        let now = self.kernel.now();
        let n = self.n;
        let cfg = self.cfg;
        let model = &cfg.commit_model;
        let idx = b as usize - 1;
        let total = self.blocks[idx].block.txs.len();
        let missing = self.blocks[idx]
            .block
            .txs
            .iter()
            .filter(|tx| self.data_at[tx.index() * n + p] > now)
            .count();
        let rt = &mut self.peers[p];
        rt.sched.begin_phase1(b);
        let vscc = Self::sample(&model.vscc, &mut rt.streams.vscc) * model.vscc_core_scale;
        let (fetch, remote) = match model.fetch_mode {
            FetchMode::AnyMissing if missing > 0 => (
                Self::sample(&model.pvt_fetch_remote, &mut rt.streams.fetch_remote),
                true,
            ),
            FetchMode::AnyMissing => (
                Self::sample(&model.pvt_fetch_local, &mut rt.streams.fetch_local),
                false,
            ),
            FetchMode::Interpolated => {
                let local = Self::sample(&model.pvt_fetch_local, &mut rt.streams.fetch_local);
                let far = Self::sample(&model.pvt_fetch_remote, &mut rt.streams.fetch_remote);
                let f = if total == 0 {
                    0.0
                } else {
                    missing as f64 / total as f64
                };
                (local + f * (far - local), missing > 0)
            }
        };
        let duration = (vscc + fetch) * rt.scale * rt.commit_scale * rt.boost;
        let end = now + duration;
        let token = rt.token();
        rt.p1 = Some(Running {
            block: b,
            end,
            token,
        });
        if missing > 0 {
            for &tx in &self.blocks[idx].block.txs {
                let slot = &mut self.data_at[tx.index() * n + p];
                if *slot > end {
                    *slot = end;
                }
            }
        }
        let t = &mut self.blocks[idx].timings[p];
        t.phase1_start = now;
        t.remote_fetch = remote;
        self.schedule(
            end,
            Ev::Phase1Done {
                peer: p as u16,
                block: b,
                token,
            },
        )
    }

    fn start_phase2(&mut self, p: usize, b: u64) -> Result<(), IntegrityError> {
        let now = self.kernel.now();
        let cfg = self.cfg;
        let model = &cfg.commit_model;
        let attempt = match self.cfg.fault {
            Some(f) if p == 0 && f.phase2_out_of_order_at == b => b + 1,
            _ => b,
        };
        let idx = b as usize - 1;
        let size = self.blocks[idx].block.txs.len() as f64;
        let rt = &mut self.peers[p];
        rt.sched.begin_phase2(attempt)?;
        let s = &mut rt.streams;
        let mut duration = Self::sample(&model.mvcc, &mut s.mvcc)
            + Self::sample(&model.block_store, &mut s.block_store)
            + Self::sample(&model.statedb, &mut s.statedb);
        if let Some(per_tx) = &model.statedb_per_tx {
            duration += Self::sample(per_tx, &mut s.statedb_per_tx) * size;
        }
        let end = now + duration * rt.scale * rt.commit_scale * rt.boost;
        let token = rt.token();
        rt.p2 = Some(Running {
            block: b,
            end,
            token,
        });
        self.blocks[idx].timings[p].phase2_start = now;
        self.schedule(
            end,
            Ev::Phase2Done {
                peer: p as u16,
                block: b,
                token,
            },
        )
    }

    fn on_phase1_done(&mut self, peer: u16, block: u64, token: u32) -> Result<(), IntegrityError> {
        let p = usize::from(peer);
        match self.peers[p].p1 {
            Some(r) if r.token == token => {}
            _ => return Ok(()),
        }
        self.peers[p].p1 = None;
        self.peers[p].sched.on_phase1_done(block)?;
        self.blocks[block as usize - 1].timings[p].phase1_end = self.kernel.now();
        self.try_start(p)
    }

    fn on_phase2_done(&mut self, peer: u16, block: u64, token: u32) -> Result<(), IntegrityError> {
        let p = usize::from(peer);
        match self.peers[p].p2 {
            Some(r) if r.token == token => {}
            _ => return Ok(()),
        }
        let now = self.kernel.now();
        self.peers[p].p2 = None;
        self.peers[p].sched.on_phase2_done(block)?;
        self.note_eligibility(now);
        self.heights[p] = block;
        let idx = block as usize - 1;
        self.blocks[idx].timings[p].phase2_end = now;
        let first = self.blocks[idx].first_commit.is_none();
        if first {
            self.blocks[idx].first_commit = Some((now, PeerId(peer)));
        }
        let n = self.n as u16;
        let mut invalid = 0;
        for i in 0..self.blocks[idx].block.txs.len() {
            let tx = self.blocks[idx].block.txs[i];
            let rec = &mut self.txs[tx.index()];
            if first {
                rec.committed_at = now;
                match rec.validity.expect("validity fixed before commit") {
                    Validity::Valid => {
                        rec.status = TxStatus::CommittedValid;
                        self.counters.committed_valid += 1;
                    }
                    Validity::InvalidMvcc => {
                        rec.status = TxStatus::CommittedInvalidMvcc;
                        self.counters.committed_invalid_mvcc += 1;
                        invalid += 1;
                    }
                }
            }
            rec.committed_peers += 1;
            if rec.committed_peers == n {
                self.in_flight.remove(tx);
            }
        }
        if first {
            self.blocks[idx].invalid = invalid;
        }
        self.eligible_now = eligible_count(&self.cfg.leader, &self.heights);

        if self.coordinator.enabled() {
            let effects = self.coordinator.on_commit(now, &self.heights)?;
            for fx in effects {
                self.apply(fx)?;
            }
        }
        for q in 0..self.n {
            self.try_start(q)?;
        }
        if !self.pending.is_empty() {
            self.dispatch_pending()?;
        }
        Ok(())
    }

    fn note_eligibility(&mut self, now: Seconds) {
        if self.eligible_now >= 2 {
            self.multi_time += now - self.eligible_since;
        }
        self.eligible_since = now;
    }

    // Strategic waiting -------------------------------------------------

    fn apply(&mut self, fx: Effect) -> Result<(), IntegrityError> {
        let now = self.kernel.now();
        match fx {
            Effect::Pause(peer) => {
                let p = peer.index();
                self.peers[p].sched.set_paused(true);
                if let Some(r) = self.peers[p].p2.take() {
                    // The in-progress commit freezes; its completion event
                    // becomes stale.
                    self.peers[p].suspended = Some((r.block, r.end - now));
                    self.peers[p].token();
                }
            }
            Effect::Resume(peer) => {
                let p = peer.index();
                self.peers[p].sched.set_paused(false);
                if let Some((block, rem)) = self.peers[p].suspended.take() {
                    let token = self.peers[p].token();
                    let end = now + rem;
                    self.peers[p].p2 = Some(Running { block, end, token });
                    self.schedule(
                        end,
                        Ev::Phase2Done {
                            peer: peer.0,
                            block,
                            token,
                        },
                    )?;
                }
            }
            // The boost switches the distribution for phases sampled from
            // now on; work already in progress keeps its drawn duration.
            Effect::Boost(peer, factor) => self.peers[peer.index()].boost = factor,
            Effect::Unboost(peer) => self.peers[peer.index()].boost = 1.0,
        }
        Ok(())
    }
}

/// Runs one scenario to completion (or the horizon).
pub fn run(cfg: &ScenarioConfig) -> Result<RunResult, SimError> {
    cfg.validate().map_err(SimError::Config)?;
    Engine::new(cfg).run()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeerSummary {
    pub peer: PeerId,
    pub height: u64,
    pub commit_tps: f64,
    pub p1_mean: f64,
    pub p2_mean: f64,
    /// Mean of `p1 + p2` per block.
    pub commit_mean: f64,
    pub remote_fetch_fraction: f64,
    pub e2e_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub counters: RunCounters,
    pub success_ratio: Option<f64>,
    pub status: RunStatus,
    pub end_time: Seconds,
    pub blocks: u64,
    pub mean_block_size: f64,
    pub block_creation: LatencySummary,
    pub endorse: LatencySummary,
    pub e2e: LatencySummary,
    pub phase1: LatencySummary,
    pub phase2: LatencySummary,
    pub commit_queue: LatencySummary,
    pub throughput: ThroughputSummary,
    pub multi_eligible_fraction: f64,
    pub peers: Vec<PeerSummary>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, c) = xs.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    if c == 0 {
        0.0
    } else {
        s / c as f64
    }
}

/// Commit TPS of one peer after skipping `warmup` blocks.
fn peer_commit_tps(blocks: &[BlockRecord], p: usize, warmup: u64) -> f64 {
    let done: Vec<&BlockRecord> = blocks
        .iter()
        .filter(|b| !b.timings[p].phase2_end.is_nan())
        .collect();
    let w = warmup as usize;
    if done.len() <= w + 1 {
        // Too short to skip a warm-up; fall back to the whole run.
        let Some(last) = done.last() else { return 0.0 };
        let t = last.timings[p].phase2_end;
        let txs: usize = done.iter().map(|b| b.block.txs.len()).sum();
        return if t > 0.0 { txs as f64 / t } else { 0.0 };
    }
    let t0 = done[w].timings[p].phase2_end;
    let t1 = done[done.len() - 1].timings[p].phase2_end;
    let txs: usize = done[w + 1..].iter().map(|b| b.block.txs.len()).sum();
    if t1 > t0 {
        txs as f64 / (t1 - t0)
    } else {
        0.0
    }
}

impl RunResult {
    pub fn summarize(&self, warmup_blocks: u64) -> RunSummary {
        let n = self.peers;
        let created_end = self
            .txs
            .iter()
            .filter(|t| !t.committed_at.is_nan())
            .map(|t| t.committed_at)
            .fold(0.0, f64::max);
        let committed = self.counters.committed_valid + self.counters.committed_invalid_mvcc;
        let e2e_tps = if created_end > 0.0 {
            committed as f64 / created_end
        } else {
            0.0
        };
        let endorse_end = self
            .txs
            .iter()
            .filter(|t| t.status != TxStatus::Dropped && !t.endorse_end.is_nan())
            .map(|t| t.endorse_end)
            .fold(0.0, f64::max);
        let endorsement_tps = if endorse_end > 0.0 {
            self.counters.endorsed as f64 / endorse_end
        } else {
            0.0
        };

        let per_peer: Vec<PeerSummary> = (0..n)
            .map(|p| {
                let done = || {
                    self.blocks
                        .iter()
                        .map(move |b| &b.timings[p])
                        .filter(|t| !t.phase2_end.is_nan())
                };
                let count = done().count();
                let remote = done().filter(|t| t.remote_fetch).count();
                let e2e = mean(self.blocks.iter().flat_map(|b| {
                    let end = b.timings[p].phase2_end;
                    b.block
                        .txs
                        .iter()
                        .filter(move |_| !end.is_nan())
                        .map(move |tx| end - self.txs[tx.index()].created_at)
                }));
                PeerSummary {
                    peer: PeerId(p as u16),
                    height: self.heights[p],
                    commit_tps: peer_commit_tps(&self.blocks, p, warmup_blocks),
                    p1_mean: mean(done().map(|t| t.p1_duration())),
                    p2_mean: mean(done().map(|t| t.p2_duration())),
                    commit_mean: mean(done().map(|t| t.p1_duration() + t.p2_duration())),
                    remote_fetch_fraction: if count == 0 {
                        0.0
                    } else {
                        remote as f64 / count as f64
                    },
                    e2e_mean: e2e,
                }
            })
            .collect();
        let commit_tps = mean(per_peer.iter().map(|s| s.commit_tps));

        let timings = || {
            self.blocks
                .iter()
                .flat_map(|b| b.timings.iter())
                .filter(|t| !t.phase2_end.is_nan())
        };
        let phase1 =
            LatencySummary::from_samples("phase1", timings().map(|t| t.p1_duration()).collect());
        let phase2 =
            LatencySummary::from_samples("phase2", timings().map(|t| t.p2_duration()).collect());
        let commit_queue = LatencySummary::from_samples(
            "commit_queue",
            timings().map(|t| t.queue_delay()).collect(),
        );
        let time_ratio = (phase2.count > 0 && phase2.mean > 0.0).then(|| phase1.mean / phase2.mean);

        RunSummary {
            counters: self.counters,
            success_ratio: crate::metrics::success_ratio(&self.counters).ok(),
            status: self.status,
            end_time: self.end_time,
            blocks: self.blocks.len() as u64,
            mean_block_size: mean(self.blocks.iter().map(|b| b.block.txs.len() as f64)),
            block_creation: LatencySummary::from_samples(
                "block_creation",
                self.blocks
                    .iter()
                    .map(|b| b.block.creation_time())
                    .collect(),
            ),
            endorse: LatencySummary::from_samples(
                "endorse",
                self.txs
                    .iter()
                    .filter(|t| t.status != TxStatus::Dropped && !t.endorse_end.is_nan())
                    .map(|t| t.endorse_end - t.endorse_start)
                    .collect(),
            ),
            e2e: LatencySummary::from_samples(
                "e2e",
                self.txs.iter().filter_map(|t| t.e2e()).collect(),
            ),
            phase1,
            phase2,
            commit_queue,
            throughput: ThroughputSummary {
                e2e_tps,
                commit_tps,
                endorsement_tps,
                performance_ratio: None,
                time_ratio,
            },
            multi_eligible_fraction: self.multi_eligible_fraction,
            peers: per_peer,
        }
    }
}

impl CommitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CommitMode::Serial => "serial",
            CommitMode::Pipelined => "pipelined",
        }
    }
}

impl LeaderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LeaderKind::MaxHt => "max_ht",
            LeaderKind::SoftMaxHt => "soft_max_ht",
            LeaderKind::RankedList => "ranked_list",
            LeaderKind::All => "all",
        }
    }
}
