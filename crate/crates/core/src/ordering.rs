//! The single logical ordering service.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::FieldError;
use crate::kernel::Seconds;
use crate::TxId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutKind {
    /// Cut at `block_size` transactions or `timeout` after the first enqueue
    /// since the last cut, whichever comes first.
    SizeWithTimeout,
    /// Every `timeout` seconds, drain the whole queue into one block.
    DynamicTimeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockCutRule {
    pub kind: CutKind,
    #[serde(default = "default_block_size")]
    pub block_size: u32,
    pub timeout: Seconds,
}

fn default_block_size() -> u32 {
    u32::MAX
}

impl BlockCutRule {
    pub fn size(block_size: u32, timeout: Seconds) -> Self {
        Self {
            kind: CutKind::SizeWithTimeout,
            block_size,
            timeout,
        }
    }

    pub fn dynamic(timeout: Seconds) -> Self {
        Self {
            kind: CutKind::DynamicTimeout,
            block_size: default_block_size(),
            timeout,
        }
    }

    pub fn validate(&self, errors: &mut Vec<FieldError>) {
        if self.kind == CutKind::SizeWithTimeout && self.block_size == 0 {
            errors.push(FieldError::new("cut_rule.block_size", "must be >= 1"));
        }
        if !(self.timeout.is_finite() && self.timeout > 0.0) {
            errors.push(FieldError::new("cut_rule.timeout", "must be > 0"));
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub block_num: u64,
    pub txs: Vec<TxId>,
    pub cut_at: Seconds,
    pub first_tx_enqueued_at: Seconds,
}

impl Block {
    pub fn creation_time(&self) -> Seconds {
        self.cut_at - self.first_tx_enqueued_at
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum EnqueueOutcome {
    Queued,
    /// The queue just became non-empty; arm a timer for `fire_at`.
    StartTimer {
        generation: u64,
        fire_at: Seconds,
    },
    Cut(Block),
}

#[derive(Debug, Clone)]
pub struct Orderer {
    rule: BlockCutRule,
    queue: VecDeque<(TxId, Seconds)>,
    next_block: u64,
    /// Bumped on every cut so stale size-rule timers are ignored.
    generation: u64,
    timer_armed: bool,
    /// Start of the current accumulation window.
    window_start: Option<Seconds>,
}

impl Orderer {
    pub fn new(rule: BlockCutRule) -> Self {
        Self {
            rule,
            queue: VecDeque::new(),
            next_block: 1,
            generation: 0,
            timer_armed: false,
            window_start: None,
        }
    }

    pub fn rule(&self) -> &BlockCutRule {
        &self.rule
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    pub fn blocks_cut(&self) -> u64 {
        self.next_block - 1
    }

    pub fn enqueue_endorsed(&mut self, tx: TxId, at: Seconds) -> EnqueueOutcome {
        self.queue.push_back((tx, at));
        if self.window_start.is_none() {
            self.window_start = Some(at);
        }
        if self.rule.kind == CutKind::DynamicTimeout {
            return EnqueueOutcome::Queued;
        }
        if self.queue.len() >= self.rule.block_size as usize {
            return EnqueueOutcome::Cut(self.cut_block(at).expect("queue non-empty"));
        }
        if !self.timer_armed {
            self.timer_armed = true;
            return EnqueueOutcome::StartTimer {
                generation: self.generation,
                fire_at: at + self.rule.timeout,
            };
        }
        EnqueueOutcome::Queued
    }

    /// Size-rule timeout. Returns a block unless the timer is stale.
    pub fn on_timeout(&mut self, generation: u64, now: Seconds) -> Option<Block> {
        if generation != self.generation || !self.timer_armed {
            return None;
        }
        self.cut_block(now)
    }

    /// Dynamic-rule tick: drains everything queued.
    pub fn on_tick(&mut self, now: Seconds) -> Option<Block> {
        self.cut_block(now)
    }

    /// Cuts up to `block_size` transactions (the whole queue under the
    /// dynamic rule). Anything left over starts a new window at `now`.
    pub fn cut_block(&mut self, now: Seconds) -> Option<Block> {
        if self.queue.is_empty() {
            return None;
        }
        let take = match self.rule.kind {
            CutKind::SizeWithTimeout => self.queue.len().min(self.rule.block_size as usize),
            CutKind::DynamicTimeout => self.queue.len(),
        };
        let first = self.window_start.unwrap_or(now);
        let txs: Vec<TxId> = self.queue.drain(..take).map(|(tx, _)| tx).collect();
        let block = Block {
            block_num: self.next_block,
            txs,
            cut_at: now,
            first_tx_enqueued_at: first,
        };
        self.next_block += 1;
        self.generation += 1;
        self.timer_armed = false;
        self.window_start = if self.queue.is_empty() {
            None
        } else {
            Some(now)
        };
        Some(block)
    }

    /// After a size cut that left a backlog the caller must re-arm the
    /// timer; this reports whether (and when) to do so.
    pub fn pending_timer(&mut self, now: Seconds) -> Option<(u64, Seconds)> {
        if self.rule.kind == CutKind::SizeWithTimeout && !self.queue.is_empty() && !self.timer_armed
        {
            self.timer_armed = true;
            Some((self.generation, now + self.rule.timeout))
        } else {
            None
        }
    }
}
