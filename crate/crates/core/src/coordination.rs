//! Strategic waiting: when the height gap exceeds `tau` (but not the safety
//! ceiling) every max-height peer stops committing and the lowest peer gets a
//! faster commit distribution until the gap is back within `tau`.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{FieldError, IntegrityError};
use crate::kernel::Seconds;
use crate::PeerId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaitingPolicy {
    #[serde(default)]
    pub enabled: bool,
    pub tau: u64,
    pub ceiling: u64,
    /// Mean commit time of the lagger while boosted.
    pub boosted_mean: Seconds,
    /// Normal mean commit time of each peer; the boost factor is
    /// `boosted_mean / baseline_means[lagger]`.
    pub baseline_means: Vec<Seconds>,
}

impl WaitingPolicy {
    pub fn disabled() -> Self {
        Self {
            enabled: false,
            tau: 0,
            ceiling: 0,
            boosted_mean: 0.0,
            baseline_means: Vec::new(),
        }
    }

    pub fn validate(&self, peers: usize, errors: &mut Vec<FieldError>) {
        if !self.enabled {
            return;
        }
        if !(0 < self.tau && self.tau < self.ceiling) {
            errors.push(FieldError::new("waiting.tau", "need 0 < tau < ceiling"));
        }
        if self.baseline_means.len() != peers {
            errors.push(FieldError::new(
                "waiting.baseline_means",
                "needs one entry per peer",
            ));
        } else if self
            .baseline_means
            .iter()
            .any(|m| !(m.is_finite() && *m > 0.0))
        {
            errors.push(FieldError::new("waiting.baseline_means", "must be > 0"));
        }
        if !(self.boosted_mean.is_finite() && self.boosted_mean > 0.0) {
            errors.push(FieldError::new("waiting.boosted_mean", "must be > 0"));
        } else if self.baseline_means.iter().all(|m| self.boosted_mean >= *m) {
            errors.push(FieldError::new(
                "waiting.boosted_mean",
                "must be below some peer's baseline mean",
            ));
        }
    }

    pub fn boost_factor(&self, lagger: PeerId) -> f64 {
        let base = self.baseline_means[lagger.index()];
        (self.boosted_mean / base).min(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WaitAction {
    None,
    PauseAndBoost {
        leaders: Vec<PeerId>,
        lagger: PeerId,
    },
    CeilingExceeded,
}

pub fn height_gap(heights: &[u64]) -> u64 {
    let max = heights.iter().copied().max().unwrap_or(0);
    let min = heights.iter().copied().min().unwrap_or(0);
    max - min
}

fn lowest(heights: &[u64]) -> PeerId {
    let (i, _) = heights
        .iter()
        .enumerate()
        .min_by_key(|(i, h)| (**h, *i))
        .expect("non-empty");
    PeerId(i as u16)
}

fn at_max(heights: &[u64]) -> Vec<PeerId> {
    let max = heights.iter().copied().max().unwrap_or(0);
    (0..heights.len())
        .filter(|&i| heights[i] == max)
        .map(|i| PeerId(i as u16))
        .collect()
}

pub fn evaluate_wait(heights: &[u64], policy: &WaitingPolicy) -> WaitAction {
    let gap = height_gap(heights);
    if gap > policy.ceiling {
        WaitAction::CeilingExceeded
    } else if gap > policy.tau {
        WaitAction::PauseAndBoost {
            leaders: at_max(heights),
            lagger: lowest(heights),
        }
    } else {
        WaitAction::None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResumeDecision {
    ContinuePause,
    Resume,
}

pub fn resume_check(
    gap_before: u64,
    heights: &[u64],
    policy: &WaitingPolicy,
) -> Result<ResumeDecision, IntegrityError> {
    let gap = height_gap(heights);
    if gap > gap_before {
        return Err(IntegrityError::GapGrewDuringPause {
            before: gap_before,
            after: gap,
        });
    }
    Ok(if gap <= policy.tau {
        ResumeDecision::Resume
    } else {
        ResumeDecision::ContinuePause
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaitEventKind {
    PauseStart,
    PauseEnd,
    BoostStart,
    BoostEnd,
    CeilingExceeded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WaitEvent {
    pub at: Seconds,
    pub kind: WaitEventKind,
    pub leader: PeerId,
    pub lagger: PeerId,
    pub gap_at_event: u64,
}

/// What the engine must do to peers after a commit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Effect {
    Pause(PeerId),
    Resume(PeerId),
    Boost(PeerId, f64),
    Unboost(PeerId),
}

#[derive(Debug, Clone)]
struct ActivePause {
    leaders: Vec<PeerId>,
    lagger: PeerId,
    gap: u64,
}

#[derive(Debug, Clone)]
pub struct Coordinator {
    policy: WaitingPolicy,
    active: Option<ActivePause>,
    boosted: Option<PeerId>,
    above_ceiling: bool,
    log: Vec<WaitEvent>,
}

impl Coordinator {
    pub fn new(policy: WaitingPolicy) -> Self {
        Self {
            policy,
            active: None,
            boosted: None,
            above_ceiling: false,
            log: Vec::new(),
        }
    }

    pub fn enabled(&self) -> bool {
        self.policy.enabled
    }

    pub fn events(&self) -> &[WaitEvent] {
        &self.log
    }

    pub fn into_events(self) -> Vec<WaitEvent> {
        self.log
    }

    pub fn is_paused(&self, peer: PeerId) -> bool {
        self.active
            .as_ref()
            .is_some_and(|a| a.leaders.contains(&peer))
    }

    pub fn boosted(&self) -> Option<PeerId> {
        self.boosted
    }

    pub fn apply_boost(&mut self, lagger: PeerId) -> Result<f64, IntegrityError> {
        if self.active.as_ref().is_none_or(|a| a.leaders.is_empty()) {
            return Err(IntegrityError::BoostWithoutPause { lagger });
        }
        self.boosted = Some(lagger);
        Ok(self.policy.boost_factor(lagger))
    }

    pub fn release_boost(&mut self) -> Option<PeerId> {
        self.boosted.take()
    }

    fn record(
        &mut self,
        at: Seconds,
        kind: WaitEventKind,
        leader: PeerId,
        lagger: PeerId,
        gap: u64,
    ) {
        self.log.push(WaitEvent {
            at,
            kind,
            leader,
            lagger,
            gap_at_event: gap,
        });
    }

    /// Called after every block commit anywhere.
    pub fn on_commit(
        &mut self,
        now: Seconds,
        heights: &[u64],
    ) -> Result<Vec<Effect>, IntegrityError> {
        let mut effects = Vec::new();
        if !self.policy.enabled {
            return Ok(effects);
        }
        let gap = height_gap(heights);
        if let Some(active) = self.active.take() {
            match resume_check(active.gap, heights, &self.policy)? {
                ResumeDecision::Resume => {
                    for &leader in &active.leaders {
                        self.record(now, WaitEventKind::PauseEnd, leader, active.lagger, gap);
                        effects.push(Effect::Resume(leader));
                    }
                    let lead = active.leaders[0];
                    if let Some(l) = self.release_boost() {
                        self.record(now, WaitEventKind::BoostEnd, lead, l, gap);
                        effects.push(Effect::Unboost(l));
                    }
                }
                ResumeDecision::ContinuePause => {
                    let mut active = active;
                    // With more than two peers the lagger can overtake someone.
                    // The boost moves to whoever is lowest now, so the old
                    // lagger is free to join the paused set below.
                    let low = lowest(heights);
                    if heights[low.index()] < heights[active.lagger.index()] {
                        let lead = active.leaders[0];
                        if let Some(old) = self.release_boost() {
                            self.record(now, WaitEventKind::BoostEnd, lead, old, gap);
                            effects.push(Effect::Unboost(old));
                        }
                        active.lagger = low;
                        self.boosted = Some(low);
                        self.record(now, WaitEventKind::BoostStart, lead, low, gap);
                        effects.push(Effect::Boost(low, self.policy.boost_factor(low)));
                    }
                    // A peer that catches up to the paused leaders joins them.
                    for p in at_max(heights) {
                        if !active.leaders.contains(&p) && p != active.lagger {
                            active.leaders.push(p);
                            self.record(now, WaitEventKind::PauseStart, p, active.lagger, gap);
                            effects.push(Effect::Pause(p));
                        }
                    }
                    active.gap = gap;
                    self.active = Some(active);
                }
            }
            return Ok(effects);
        }
        match evaluate_wait(heights, &self.policy) {
            WaitAction::None => self.above_ceiling = false,
            WaitAction::CeilingExceeded => {
                if !self.above_ceiling {
                    let lead = at_max(heights)[0];
                    self.record(
                        now,
                        WaitEventKind::CeilingExceeded,
                        lead,
                        lowest(heights),
                        gap,
                    );
                }
                self.above_ceiling = true;
            }
            WaitAction::PauseAndBoost { leaders, lagger } => {
                self.above_ceiling = false;
                for &leader in &leaders {
                    self.record(now, WaitEventKind::PauseStart, leader, lagger, gap);
                    effects.push(Effect::Pause(leader));
                }
                let lead = leaders[0];
                self.active = Some(ActivePause {
                    leaders,
                    lagger,
                    gap,
                });
                let factor = self.apply_boost(lagger)?;
                self.record(now, WaitEventKind::BoostStart, lead, lagger, gap);
                effects.push(Effect::Boost(lagger, factor));
            }
        }
        Ok(effects)
    }
}
