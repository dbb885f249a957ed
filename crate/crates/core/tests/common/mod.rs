//! Small scenario builders and invariant checks shared by the
//! integration tests.

#![allow(dead_code)]

use fabric_sim_core::commit::{CommitLatencyModel, CommitMode, FetchMode, MvccModel, PhaseTiming};
use fabric_sim_core::config::{EndorsementModel, MetricsConfig, OnFull, PeerConfig};
use fabric_sim_core::coordination::{WaitEventKind, WaitingPolicy};
use fabric_sim_core::dist::DistributionSpec;
use fabric_sim_core::endorsement::{
    is_eligible, quorum_satisfied, AckSample, DisseminationStrategy, LeaderKind, LeaderPolicy,
};
use fabric_sim_core::ordering::BlockCutRule;
use fabric_sim_core::sim::{DropReason, RunStatus, TxRecord};
use fabric_sim_core::workload::{ArrivalProcess, TxStatus, WorkloadConfig};
use fabric_sim_core::{run, PeerId, RunResult, ScenarioConfig};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub fn exp(mean: f64) -> DistributionSpec {
    DistributionSpec::exponential(mean)
}

pub fn commit_model(fetch_mode: FetchMode) -> CommitLatencyModel {
    CommitLatencyModel {
        vscc: exp(0.05),
        pvt_fetch_local: exp(0.02),
        pvt_fetch_remote: exp(0.2),
        mvcc: exp(0.01),
        block_store: exp(0.01),
        statedb: exp(0.05),
        statedb_per_tx: None,
        vscc_core_scale: 1.0,
        fetch_mode,
    }
}

/// Four peers, a couple of hundred transactions, everything exponential.
pub fn small(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        name: None,
        seed,
        workload: WorkloadConfig {
            num_clients: 4,
            rate_per_client: 20.0,
            duration: 3.0,
            dependency_prob: 0.5,
            arrival_process: ArrivalProcess::Poisson,
            pool_size: None,
        },
        peers: PeerConfig {
            count: 4,
            latency_scale: Vec::new(),
            commit_scale: Vec::new(),
            concurrency: 4,
            buffer: 4,
            on_full: OnFull::Drop,
        },
        endorsement: EndorsementModel {
            execute: exp(0.1),
            ack: exp(0.05),
            overhead: DistributionSpec::zero(),
        },
        dissemination: DisseminationStrategy::new(2, 1),
        leader: LeaderPolicy::new(LeaderKind::All),
        cut_rule: BlockCutRule::size(10, 0.5),
        ordering_overhead: 0.0,
        commit_mode: CommitMode::Serial,
        commit_model: commit_model(FetchMode::AnyMissing),
        mvcc: MvccModel::LedgerOrder,
        waiting: WaitingPolicy::disabled(),
        horizon: 1000.0,
        metrics: MetricsConfig::default(),
        output_dir: None,
        sweep: None,
        fault: None,
    }
}

pub fn leader_policy() -> impl Strategy<Value = LeaderPolicy> {
    prop_oneof![
        Just(LeaderPolicy::new(LeaderKind::MaxHt)),
        (0u64..4).prop_map(LeaderPolicy::soft),
        Just(LeaderPolicy::new(LeaderKind::RankedList)),
        Just(LeaderPolicy::new(LeaderKind::All)),
    ]
}

/// Random small scenarios covering every policy switch.
pub fn scenario() -> impl Strategy<Value = ScenarioConfig> {
    (
        any::<u64>(),
        2u16..=5,
        1u32..=4,
        5.0f64..40.0,
        0.0f64..=1.0,
        prop::bool::ANY,
        leader_policy(),
        (1u32..=6, 0u32..=4),
        (2u32..=30, 0.05f64..1.0),
        (
            prop::bool::ANY,
            prop::bool::ANY,
            prop::bool::ANY,
            prop::bool::ANY,
        ),
        (0.0f64..1.0, prop::bool::ANY),
    )
        .prop_flat_map(
            |(
                seed,
                n,
                clients,
                rate,
                p,
                poisson,
                leader,
                cap,
                cut,
                (pipelined, stale, interp, relaxed),
                (ack_frac, hold),
            )| {
                (1..n).prop_flat_map(move |m| {
                    (1..=m).prop_map(move |r| {
                        let mut cfg = small(seed);
                        cfg.peers.count = n;
                        cfg.peers.concurrency = cap.0;
                        cfg.peers.buffer = cap.1;
                        cfg.peers.on_full = if hold { OnFull::Hold } else { OnFull::Drop };
                        cfg.workload.num_clients = clients;
                        cfg.workload.rate_per_client = rate;
                        cfg.workload.dependency_prob = p;
                        cfg.workload.arrival_process = if poisson {
                            ArrivalProcess::Poisson
                        } else {
                            ArrivalProcess::Deterministic
                        };
                        cfg.leader = leader;
                        cfg.dissemination = if relaxed {
                            DisseminationStrategy::relaxed(m)
                        } else {
                            DisseminationStrategy::new(m, r)
                        };
                        // Short timeouts make quorum failures (and so quorum drops) common.
                        cfg.dissemination.ack_timeout = 0.02 + ack_frac * 0.2;
                        cfg.cut_rule = BlockCutRule::size(cut.0, cut.1);
                        cfg.commit_mode = if pipelined {
                            CommitMode::Pipelined
                        } else {
                            CommitMode::Serial
                        };
                        cfg.mvcc = if stale {
                            MvccModel::StaleRead
                        } else {
                            MvccModel::LedgerOrder
                        };
                        cfg.commit_model = commit_model(if interp {
                            FetchMode::Interpolated
                        } else {
                            FetchMode::AnyMissing
                        });
                        cfg
                    })
                })
            },
        )
}

// Invariant checks. Each takes one generated input and fails with a
// message; the proptest suites and the acceptance report share them.

/// Height of `peer` at `t`, counting phase-2 completions strictly before
/// `t` (`inclusive = false`) or at or before it.
fn height_at(r: &RunResult, peer: usize, t: f64, inclusive: bool) -> u64 {
    r.blocks
        .iter()
        .filter(|b| {
            let end = b.timings[peer].phase2_end;
            !end.is_nan() && if inclusive { end <= t } else { end < t }
        })
        .count() as u64
}

/// When a dropped transaction's fate was sealed: at routing for a capacity
/// drop, at the start of endorsement for a failed quorum.
fn dropped_at(t: &TxRecord) -> f64 {
    match t.drop_reason {
        Some(DropReason::Quorum) => t.endorse_start,
        _ => t.routed_at,
    }
}

/// Every committed transaction is valid iff it has no parent, its parent
/// was already known to be dropped when the child was ordered, or its
/// parent sits earlier in the ledger.
fn validity_follows_ledger_order(r: &RunResult) -> Result<(), TestCaseError> {
    for (i, t) in r.txs.iter().enumerate() {
        let parent = t.parent.map(|p| &r.txs[p.index()]);
        // The drop and the cut landed on the same instant: either order is
        // a legal interleaving.
        if parent.is_some_and(|p| p.status == TxStatus::Dropped && dropped_at(p) == t.ordered_at) {
            continue;
        }
        let expect_valid = match parent {
            None => true,
            Some(parent) => {
                (parent.status == TxStatus::Dropped && dropped_at(parent) <= t.ordered_at)
                    || matches!((parent.pos, t.pos), (Some(a), Some(b)) if a < b)
            }
        };
        let ok = match t.status {
            TxStatus::CommittedValid => expect_valid,
            TxStatus::CommittedInvalidMvcc => !expect_valid,
            _ => true,
        };
        if !ok {
            return Err(TestCaseError::fail(format!(
                "tx{i} {t:?}\nparent {parent:?}"
            )));
        }
    }
    Ok(())
}

fn run_ok(cfg: &ScenarioConfig) -> Result<RunResult, TestCaseError> {
    run(cfg).map_err(|e| TestCaseError::fail(format!("{e}")))
}

pub fn conservation(cfg: ScenarioConfig) -> Result<(), TestCaseError> {
    let r = run_ok(&cfg)?;
    prop_assert_eq!(r.status, RunStatus::Drained);
    let c = r.counters;
    prop_assert!(c.check().is_ok(), "{:?}", c.check());
    prop_assert_eq!(c.created, c.endorsed + c.dropped);
    prop_assert_eq!(c.endorsed, c.committed_valid + c.committed_invalid_mvcc);
    prop_assert_eq!(c.created as usize, r.txs.len());
    let count = |s: TxStatus| r.txs.iter().filter(|t| t.status == s).count() as u64;
    prop_assert_eq!(count(TxStatus::Dropped), c.dropped);
    prop_assert_eq!(count(TxStatus::CommittedValid), c.committed_valid);
    prop_assert_eq!(
        count(TxStatus::CommittedInvalidMvcc),
        c.committed_invalid_mvcc
    );
    let in_blocks: usize = r.blocks.iter().map(|b| b.block.txs.len()).sum();
    prop_assert_eq!(in_blocks as u64, c.endorsed);
    for h in &r.heights {
        prop_assert_eq!(*h, r.blocks.len() as u64);
    }
    Ok(())
}

pub fn pipeline_safety(cfg: ScenarioConfig) -> Result<(), TestCaseError> {
    let r = run_ok(&cfg)?;
    for p in 0..r.peers {
        let mut prev: Option<&PhaseTiming> = None;
        for b in &r.blocks {
            let t = &b.timings[p];
            prop_assert!(t.phase1_start >= t.delivered_at);
            prop_assert!(t.phase1_end >= t.phase1_start);
            prop_assert!(t.phase2_start >= t.phase1_end);
            prop_assert!(t.phase2_end >= t.phase2_start);
            if let Some(q) = prev {
                prop_assert!(t.block_num == q.block_num + 1);
                prop_assert!(
                    t.phase2_start >= q.phase2_end,
                    "peer {} block {}",
                    p,
                    t.block_num
                );
                prop_assert!(t.phase1_start >= q.phase1_end);
                if cfg.commit_mode == CommitMode::Serial {
                    prop_assert!(t.phase1_start >= q.phase2_end);
                }
            }
            prev = Some(t);
        }
    }
    Ok(())
}

pub fn mode_equivalence(mut cfg: ScenarioConfig) -> Result<(), TestCaseError> {
    cfg.leader = LeaderPolicy::new(LeaderKind::All);
    cfg.mvcc = MvccModel::LedgerOrder;
    cfg.commit_mode = CommitMode::Serial;
    let serial = run_ok(&cfg)?;
    cfg.commit_mode = CommitMode::Pipelined;
    let piped = run_ok(&cfg)?;
    prop_assert_eq!(serial.blocks.len(), piped.blocks.len());
    for (a, b) in serial.blocks.iter().zip(&piped.blocks) {
        prop_assert_eq!(&a.block.txs, &b.block.txs);
    }
    validity_follows_ledger_order(&serial)?;
    validity_follows_ledger_order(&piped)?;
    // Parents are drawn from the in-flight set, which shrinks as peers
    // commit, so the two modes can draw different parents. Where the draw
    // agrees the outcome must too.
    for (a, b) in serial.txs.iter().zip(&piped.txs) {
        prop_assert_eq!(a.pos, b.pos);
        if a.parent == b.parent {
            prop_assert_eq!(a.status, b.status);
        }
    }
    Ok(())
}

pub fn eligibility(cfg: ScenarioConfig) -> Result<(), TestCaseError> {
    let r = run_ok(&cfg)?;
    for (i, t) in r.txs.iter().enumerate() {
        let Some(peer) = t.endorser else { continue };
        let heights = |inclusive| {
            (0..r.peers)
                .map(|p| height_at(&r, p, t.routed_at, inclusive))
                .collect::<Vec<_>>()
        };
        // A commit landing at exactly the routing instant may be ordered
        // either side of it.
        let ok = is_eligible(&cfg.leader, &heights(false), peer)
            || is_eligible(&cfg.leader, &heights(true), peer);
        prop_assert!(ok, "tx{} routed to {} at {}", i, peer, t.routed_at);
    }
    Ok(())
}

/// Ack delays, timeout and the designated peer's index.
pub fn quorum_input() -> impl Strategy<Value = (Vec<f64>, f64, usize)> {
    (
        prop::collection::vec(0.0f64..2.0, 1..8),
        0.05f64..2.5,
        0usize..8,
    )
}

pub fn quorum_monotone(
    (delays, timeout, designated): (Vec<f64>, f64, usize),
) -> Result<(), TestCaseError> {
    let m = delays.len() as u16;
    let acks: Vec<AckSample> = delays
        .iter()
        .enumerate()
        .map(|(i, &d)| AckSample {
            peer: PeerId(i as u16 + 1),
            delay: d,
        })
        .collect();
    let designated = acks[designated % acks.len()].peer;
    let with = |mut s: DisseminationStrategy| {
        s.ack_timeout = timeout;
        quorum_satisfied(&s, &acks, designated)
    };
    let relaxed = with(DisseminationStrategy::relaxed(m));
    let strict = [
        with(DisseminationStrategy::new(m, 1)),
        with(DisseminationStrategy::new(m, m)),
    ];
    for w in strict.into_iter().flatten() {
        let Ok(r) = relaxed else {
            return Err(TestCaseError::fail(
                "a strict quorum held but the relaxed one did not",
            ));
        };
        prop_assert!(r <= w, "relaxed {} > strict {}", r, w);
    }
    // Fewer required acks never waits longer either.
    for r in 1..m {
        if let (Ok(lo), Ok(hi)) = (
            with(DisseminationStrategy::new(m, r)),
            with(DisseminationStrategy::new(m, r + 1)),
        ) {
            prop_assert!(lo <= hi);
        }
    }
    Ok(())
}

/// A scenario with one slow peer and waiting switched on.
pub fn waiting_scenario() -> impl Strategy<Value = ScenarioConfig> {
    (scenario(), 1u64..4, 1u64..8, 1.2f64..3.0, 0.3f64..0.95).prop_map(
        |(mut cfg, tau, extra, slow, boost)| {
            let n = usize::from(cfg.peers.count);
            cfg.leader = LeaderPolicy::soft(tau);
            cfg.peers.commit_scale = (0..n)
                .map(|i| if i + 1 == n { slow } else { 1.0 })
                .collect();
            cfg.cut_rule.block_size = 3;
            let base: Vec<f64> = cfg.peers.commit_scale.iter().map(|s| 0.1 * s).collect();
            cfg.waiting = WaitingPolicy {
                enabled: true,
                tau,
                ceiling: tau + extra,
                boosted_mean: base[n - 1] * boost,
                baseline_means: base,
            };
            cfg
        },
    )
}

pub fn pause_holds(cfg: ScenarioConfig) -> Result<(), TestCaseError> {
    let r = run_ok(&cfg)?;
    let tau = cfg.waiting.tau;
    for (i, e) in r.waits.iter().enumerate() {
        if e.kind != WaitEventKind::PauseStart {
            continue;
        }
        prop_assert!(e.gap_at_event > tau);
        let end = r.waits[i..]
            .iter()
            .find(|x| x.kind == WaitEventKind::PauseEnd && x.leader == e.leader)
            .map_or(r.end_time, |x| x.at);
        let l = e.leader.index();
        for b in &r.blocks {
            let t = b.timings[l].phase2_end;
            prop_assert!(
                !(t > e.at && t < end),
                "{} finished block {} at {} inside pause [{}, {}]",
                e.leader,
                b.timings[l].block_num,
                t,
                e.at,
                end
            );
        }
    }
    Ok(())
}
