//! Scenario configuration. Every field is in seconds; millisecond input is
//! converted by the loader before it reaches these types.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::commit::{CommitLatencyModel, CommitMode, MvccModel};
use crate::coordination::WaitingPolicy;
use crate::dist::DistributionSpec;
use crate::endorsement::{DisseminationStrategy, LeaderPolicy, PeerCapacity};
use crate::error::FieldError;
use crate::kernel::Seconds;
use crate::ordering::BlockCutRule;
use crate::workload::WorkloadConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OnFull {
    /// Arrivals that find every eligible peer full are dropped.
    #[default]
    Drop,
    /// They wait in a FIFO until some eligible peer has room.
    Hold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PeerConfig {
    pub count: u16,
    /// Per-peer multiplier on every latency sampled at that peer. Empty
    /// means 1.0 everywhere.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub latency_scale: Vec<f64>,
    /// Extra per-peer multiplier on commit phases only.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub commit_scale: Vec<f64>,
    pub concurrency: u32,
    pub buffer: u32,
    #[serde(default)]
    pub on_full: OnFull,
}

impl PeerConfig {
    pub fn capacity(&self) -> PeerCapacity {
        PeerCapacity {
            concurrency: self.concurrency,
            buffer: self.buffer,
        }
    }

    pub fn scale(&self, peer: usize) -> f64 {
        self.latency_scale.get(peer).copied().unwrap_or(1.0)
    }

    pub fn commit_scale(&self, peer: usize) -> f64 {
        self.commit_scale.get(peer).copied().unwrap_or(1.0)
    }
}

fn zero_dist() -> DistributionSpec {
    DistributionSpec::zero()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndorsementModel {
    pub execute: DistributionSpec,
    /// Delay until a dissemination target acknowledges.
    pub ack: DistributionSpec,
    #[serde(default = "zero_dist")]
    pub overhead: DistributionSpec,
}

fn default_warmup() -> u64 {
    10
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsConfig {
    /// Blocks skipped per peer before commit throughput is measured.
    #[serde(default = "default_warmup")]
    pub warmup_blocks: u64,
    #[serde(default)]
    pub per_peer: bool,
    /// Write per-transaction and per-block traces.
    #[serde(default = "yes")]
    pub trace: bool,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            warmup_blocks: default_warmup(),
            per_peer: false,
            trace: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridValue {
    Bool(bool),
    Num(f64),
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepPlan {
    /// Config path (dotted, or a leaf name that resolves uniquely) to the
    /// values it takes.
    #[serde(default)]
    pub grid: BTreeMap<String, Vec<GridValue>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
}

/// Deliberate model breakage, used to check that integrity failures are
/// caught and reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultInjection {
    /// Peer 0 tries phase 2 of block `b + 1` when it should run block `b`.
    pub phase2_out_of_order_at: u64,
}

fn disabled_waiting() -> WaitingPolicy {
    WaitingPolicy::disabled()
}

fn is_disabled(w: &WaitingPolicy) -> bool {
    *w == WaitingPolicy::disabled()
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub seed: u64,
    pub workload: WorkloadConfig,
    pub peers: PeerConfig,
    pub endorsement: EndorsementModel,
    pub dissemination: DisseminationStrategy,
    pub leader: LeaderPolicy,
    pub cut_rule: BlockCutRule,
    /// Constant delay between a cut and delivery to the peers.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub ordering_overhead: Seconds,
    pub commit_mode: CommitMode,
    pub commit_model: CommitLatencyModel,
    #[serde(default)]
    pub mvcc: MvccModel,
    #[serde(default = "disabled_waiting", skip_serializing_if = "is_disabled")]
    pub waiting: WaitingPolicy,
    /// Hard stop. Runs that drain earlier end earlier.
    pub horizon: Seconds,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepPlan>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fault: Option<FaultInjection>,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), Vec<FieldError>> {
        let mut errors = Vec::new();
        let n = usize::from(self.peers.count);
        self.workload.validate(&mut errors);
        if n < 2 {
            errors.push(FieldError::new("peers.count", "need at least 2 peers"));
        }
        if !self.peers.latency_scale.is_empty() && self.peers.latency_scale.len() != n {
            errors.push(FieldError::new(
                "peers.latency_scale",
                "needs one entry per peer (or none)",
            ));
        }
        if self
            .peers
            .latency_scale
            .iter()
            .any(|s| !(s.is_finite() && *s > 0.0))
        {
            errors.push(FieldError::new(
                "peers.latency_scale",
                "entries must be > 0",
            ));
        }
        if !self.peers.commit_scale.is_empty() && self.peers.commit_scale.len() != n {
            errors.push(FieldError::new(
                "peers.commit_scale",
                "needs one entry per peer (or none)",
            ));
        }
        if self
            .peers
            .commit_scale
            .iter()
            .any(|s| !(s.is_finite() && *s > 0.0))
        {
            errors.push(FieldError::new("peers.commit_scale", "entries must be > 0"));
        }
        if self.peers.concurrency == 0 {
            errors.push(FieldError::new("peers.concurrency", "must be >= 1"));
        }
        self.endorsement
            .execute
            .validate("endorsement.execute", &mut errors);
        self.endorsement
            .ack
            .validate("endorsement.ack", &mut errors);
        self.endorsement
            .overhead
            .validate("endorsement.overhead", &mut errors);
        if n >= 2 {
            self.dissemination.validate(n, &mut errors);
        }
        self.cut_rule.validate(&mut errors);
        if !(self.ordering_overhead.is_finite() && self.ordering_overhead >= 0.0) {
            errors.push(FieldError::new("ordering_overhead", "must be >= 0"));
        }
        self.commit_model.validate(&mut errors);
        self.waiting.validate(n, &mut errors);
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            errors.push(FieldError::new("horizon", "must be > 0"));
        }
        if let Some(plan) = &self.sweep {
            for (k, v) in &plan.grid {
                if v.is_empty() {
                    errors.push(FieldError::new(
                        alloc::format!("sweep.grid.{k}"),
                        "needs at least one value",
                    ));
                }
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            Err(errors)
        }
    }
}
