//! Endorser selection, admission control and private-data dissemination.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::FieldError;
use crate::kernel::Seconds;
use crate::rng::RngStream;
use crate::PeerId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LeaderKind {
    MaxHt,
    SoftMaxHt,
    RankedList,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LeaderPolicy {
    pub kind: LeaderKind,
    /// Height slack for `soft_max_ht`; ignored otherwise.
    #[serde(default)]
    pub tau: u64,
}

impl LeaderPolicy {
    pub fn new(kind: LeaderKind) -> Self {
        Self { kind, tau: 0 }
    }

    pub fn soft(tau: u64) -> Self {
        Self {
            kind: LeaderKind::SoftMaxHt,
            tau,
        }
    }
}

/// Peers allowed to endorse right now. For `ranked_list` every peer is
/// eligible and the order (height descending, then id) is the routing
/// preference; the other kinds return ids in ascending order.
pub fn eligible_endorsers(policy: &LeaderPolicy, heights: &[u64]) -> Vec<PeerId> {
    let ids = (0..heights.len()).map(|i| PeerId(i as u16));
    match policy.kind {
        LeaderKind::RankedList => {
            let mut v: Vec<PeerId> = ids.collect();
            v.sort_by(|a, b| heights[b.index()].cmp(&heights[a.index()]).then(a.cmp(b)));
            v
        }
        _ => ids.filter(|p| is_eligible(policy, heights, *p)).collect(),
    }
}

pub fn is_eligible(policy: &LeaderPolicy, heights: &[u64], peer: PeerId) -> bool {
    let max = heights.iter().copied().max().unwrap_or(0);
    let h = heights[peer.index()];
    match policy.kind {
        LeaderKind::MaxHt => h == max,
        LeaderKind::SoftMaxHt => max - h <= policy.tau,
        LeaderKind::RankedList | LeaderKind::All => true,
    }
}

pub fn eligible_count(policy: &LeaderPolicy, heights: &[u64]) -> usize {
    (0..heights.len())
        .filter(|&i| is_eligible(policy, heights, PeerId(i as u16)))
        .count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeerCapacity {
    pub concurrency: u32,
    pub buffer: u32,
}

impl PeerCapacity {
    pub fn has_room(&self, busy: u32, buffered: u32) -> bool {
        busy < self.concurrency || buffered < self.buffer
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Admission {
    Executing,
    Buffered,
    Dropped,
}

pub fn admit(busy: u32, buffered: u32, cap: &PeerCapacity) -> Admission {
    if busy < cap.concurrency {
        Admission::Executing
    } else if buffered < cap.buffer {
        Admission::Buffered
    } else {
        Admission::Dropped
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    Assigned(PeerId),
    Dropped,
}

/// Round-robin cursor shared by the non-ranked policies.
#[derive(Debug, Clone, Default)]
pub struct Router {
    rr: usize,
}

impl Router {
    pub fn new() -> Self {
        Self::default()
    }

    /// `load[i]` is `(busy, buffered)` for peer `i`.
    pub fn route(
        &mut self,
        policy: &LeaderPolicy,
        heights: &[u64],
        load: &[(u32, u32)],
        cap: &PeerCapacity,
    ) -> Route {
        let has_room = |p: PeerId| {
            let (busy, buffered) = load[p.index()];
            cap.has_room(busy, buffered)
        };
        let candidates = eligible_endorsers(policy, heights);
        if policy.kind == LeaderKind::RankedList {
            return candidates
                .into_iter()
                .find(|p| has_room(*p))
                .map_or(Route::Dropped, Route::Assigned);
        }
        if candidates.is_empty() {
            return Route::Dropped;
        }
        // The cursor only moves on success, so a failed probe (a held
        // transaction retried on a commit) leaves routing untouched.
        let start = self.rr % candidates.len();
        let found = (0..candidates.len())
            .map(|k| candidates[(start + k) % candidates.len()])
            .find(|p| has_room(*p));
        match found {
            Some(p) => {
                self.rr = self.rr.wrapping_add(1);
                Route::Assigned(p)
            }
            None => Route::Dropped,
        }
    }
}

fn default_ack_timeout() -> Seconds {
    1.0
}

fn default_max_retries() -> u32 {
    1
}

/// `(m, r)` private-data dissemination: send to `m` other peers and require
/// `r` acknowledgements. `relaxed` is the `(m, 1*)` variant that proceeds on
/// the first acknowledgement from anyone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisseminationStrategy {
    pub max_peer_count: u16,
    pub required_peer_count: u16,
    #[serde(default)]
    pub relaxed: bool,
    #[serde(default = "default_ack_timeout")]
    pub ack_timeout: Seconds,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
}

impl DisseminationStrategy {
    pub fn new(m: u16, r: u16) -> Self {
        Self {
            max_peer_count: m,
            required_peer_count: r,
            relaxed: false,
            ack_timeout: default_ack_timeout(),
            max_retries: default_max_retries(),
        }
    }

    pub fn relaxed(m: u16) -> Self {
        Self {
            relaxed: true,
            ..Self::new(m, 1)
        }
    }

    pub fn label(&self) -> alloc::string::String {
        alloc::format!(
            "{}-{}{}",
            self.max_peer_count,
            self.required_peer_count,
            if self.relaxed { "*" } else { "" }
        )
    }

    pub fn validate(&self, peers: usize, errors: &mut Vec<FieldError>) {
        let m = usize::from(self.max_peer_count);
        let r = self.required_peer_count;
        if m < 1 || m + 1 > peers {
            errors.push(FieldError::new(
                "dissemination.max_peer_count",
                alloc::format!(
                    "must lie in 1..={} (peers.count - 1)",
                    peers.saturating_sub(1)
                ),
            ));
        }
        if r < 1 || r > self.max_peer_count {
            errors.push(FieldError::new(
                "dissemination.required_peer_count",
                "must lie in 1..=max_peer_count",
            ));
        }
        if self.relaxed && r != 1 {
            errors.push(FieldError::new(
                "dissemination.required_peer_count",
                "relaxed quorum requires required_peer_count = 1",
            ));
        }
        if !(self.ack_timeout.is_finite() && self.ack_timeout > 0.0) {
            errors.push(FieldError::new("dissemination.ack_timeout", "must be > 0"));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckSample {
    pub peer: PeerId,
    pub delay: Seconds,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuorumFailure {
    NoAck,
    DesignatedMissing,
    TooFewAcks { got: usize, need: usize },
}

/// Time the endorser spends waiting on acknowledgements in one round.
/// A delay above `ack_timeout` counts as a missing ack.
pub fn quorum_satisfied(
    strategy: &DisseminationStrategy,
    acks: &[AckSample],
    designated: PeerId,
) -> Result<Seconds, QuorumFailure> {
    let timeout = strategy.ack_timeout;
    let in_time = |a: &&AckSample| a.delay <= timeout;
    if strategy.relaxed {
        return acks
            .iter()
            .filter(in_time)
            .map(|a| a.delay)
            .min_by(f64::total_cmp)
            .ok_or(QuorumFailure::NoAck);
    }
    if !acks.iter().filter(in_time).any(|a| a.peer == designated) {
        return Err(QuorumFailure::DesignatedMissing);
    }
    let got = acks.iter().filter(in_time).count();
    let need = usize::from(strategy.required_peer_count);
    if got < need {
        return Err(QuorumFailure::TooFewAcks { got, need });
    }
    if got == acks.len() {
        Ok(acks.iter().map(|a| a.delay).fold(0.0, f64::max))
    } else {
        // Someone is still outstanding; the endorser waits out the timeout.
        Ok(timeout)
    }
}

/// `m` targets other than `endorser`, in ascending id order. The first one
/// is the designated peer for non-relaxed quorums.
pub fn choose_targets(
    endorser: PeerId,
    peers: usize,
    m: usize,
    rng: &mut RngStream,
) -> Vec<PeerId> {
    let mut others: Vec<PeerId> = (0..peers)
        .map(|i| PeerId(i as u16))
        .filter(|p| *p != endorser)
        .collect();
    if m < others.len() {
        for i in 0..m {
            let j = i + rng.below(others.len() - i);
            others.swap(i, j);
        }
        others.truncate(m);
        others.sort();
    }
    others
}

#[derive(Debug, Clone, PartialEq)]
pub struct DisseminationOutcome {
    pub success: bool,
    /// Total time attributable to dissemination, failed rounds included.
    pub wait: Seconds,
    /// Peers that hold the data afterwards, with arrival offset from the
    /// start of dissemination. Empty on failure.
    pub acked: Vec<(PeerId, Seconds)>,
    pub retries_used: u32,
}

/// Runs up to `1 + max_retries` rounds, each with a fresh target choice.
pub fn disseminate<F>(
    strategy: &DisseminationStrategy,
    endorser: PeerId,
    peers: usize,
    targets_rng: &mut RngStream,
    mut sample_ack: F,
) -> DisseminationOutcome
where
    F: FnMut(PeerId) -> Seconds,
{
    let m = usize::from(strategy.max_peer_count);
    let mut offset = 0.0;
    for round in 0..=strategy.max_retries {
        let targets = choose_targets(endorser, peers, m, targets_rng);
        let acks: Vec<AckSample> = targets
            .iter()
            .map(|&peer| AckSample {
                peer,
                delay: sample_ack(peer),
            })
            .collect();
        match quorum_satisfied(strategy, &acks, targets[0]) {
            Ok(wait) => {
                let acked = acks
                    .iter()
                    .filter(|a| a.delay <= strategy.ack_timeout)
                    .map(|a| (a.peer, offset + a.delay))
                    .collect();
                return DisseminationOutcome {
                    success: true,
                    wait: offset + wait,
                    acked,
                    retries_used: round,
                };
            }
            Err(_) => offset += strategy.ack_timeout,
        }
    }
    DisseminationOutcome {
        success: false,
        wait: offset,
        acked: Vec::new(),
        retries_used: strategy.max_retries,
    }
}
