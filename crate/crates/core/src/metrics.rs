//! Run counters, latency summaries and derived ratios.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::Seconds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RunCounters {
    pub created: u64,
    pub endorsed: u64,
    pub dropped: u64,
    pub dropped_capacity: u64,
    pub dropped_quorum: u64,
    pub committed_valid: u64,
    pub committed_invalid_mvcc: u64,
    /// Created but neither endorsed nor dropped when the run stopped.
    pub unendorsed_at_horizon: u64,
    /// Endorsed but not committed by the first committing peer.
    pub endorsed_uncommitted: u64,
}

impl RunCounters {
    /// The two conservation identities. With a truncated run the first one
    /// also accounts for transactions still waiting on endorsement.
    pub fn check(&self) -> Result<(), String> {
        if self.created != self.endorsed + self.dropped + self.unendorsed_at_horizon {
            return Err(alloc::format!(
                "created {} != endorsed {} + dropped {} + unendorsed {}",
                self.created,
                self.endorsed,
                self.dropped,
                self.unendorsed_at_horizon
            ));
        }
        if self.dropped != self.dropped_capacity + self.dropped_quorum {
            return Err(alloc::format!(
                "dropped {} != capacity {} + quorum {}",
                self.dropped,
                self.dropped_capacity,
                self.dropped_quorum
            ));
        }
        let settled =
            self.committed_valid + self.committed_invalid_mvcc + self.endorsed_uncommitted;
        if self.endorsed != settled {
            return Err(alloc::format!(
                "endorsed {} != valid {} + invalid {} + in flight {}",
                self.endorsed,
                self.committed_valid,
                self.committed_invalid_mvcc,
                self.endorsed_uncommitted
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("success ratio is undefined when nothing was created")]
    NothingCreated,
    #[error("time ratio is undefined when phase 2 takes no time")]
    ZeroPhase2,
}

/// `(endorsed - invalid) / created`. Transactions still in flight at the
/// horizon count as successes.
pub fn success_ratio(c: &RunCounters) -> Result<f64, MetricError> {
    if c.created == 0 {
        return Err(MetricError::NothingCreated);
    }
    Ok((c.endorsed - c.committed_invalid_mvcc) as f64 / c.created as f64)
}

pub fn time_ratio(p1_mean: Seconds, p2_mean: Seconds) -> Result<f64, MetricError> {
    if p2_mean <= 0.0 {
        return Err(MetricError::ZeroPhase2);
    }
    Ok(p1_mean / p2_mean)
}

/// Nearest-rank percentile of sorted data: the value at rank
/// `ceil(q/100 * n)` (1-based).
pub fn percentile_nearest_rank(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let n = sorted.len();
    let rank = libm::ceil(q / 100.0 * n as f64) as usize;
    Some(sorted[rank.clamp(1, n) - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub stage: String,
    pub mean: f64,
    pub std: f64,
    pub p50: f64,
    pub p95: f64,
    pub p99: f64,
    pub count: u64,
}

impl LatencySummary {
    pub fn empty(stage: &str) -> Self {
        Self {
            stage: stage.into(),
            mean: 0.0,
            std: 0.0,
            p50: 0.0,
            p95: 0.0,
            p99: 0.0,
            count: 0,
        }
    }

    /// Population standard deviation.
    pub fn from_samples(stage: &str, mut xs: Vec<f64>) -> Self {
        if xs.is_empty() {
            return Self::empty(stage);
        }
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        let p = |q| percentile_nearest_rank(&xs, q).unwrap_or(0.0);
        Self {
            stage: stage.into(),
            mean,
            std: libm::sqrt(var),
            p50: p(50.0),
            p95: p(95.0),
            p99: p(99.0),
            count: xs.len() as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ThroughputSummary {
    pub e2e_tps: f64,
    pub commit_tps: f64,
    pub endorsement_tps: f64,
    /// Pipelined over serial commit TPS; only known when both runs exist.
    pub performance_ratio: Option<f64>,
    pub time_ratio: Option<f64>,
}

/// Commit time at the measuring peer minus creation time; `None` while
/// uncommitted.
pub fn e2e_latency(created_at: Seconds, committed_at: Option<Seconds>) -> Option<Seconds> {
    committed_at.map(|t| t - created_at)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn counters(created: u64, endorsed: u64, dropped: u64, invalid: u64) -> RunCounters {
        RunCounters {
            created,
            endorsed,
            dropped,
            dropped_capacity: dropped,
            committed_invalid_mvcc: invalid,
            committed_valid: endorsed - invalid,
            ..Default::default()
        }
    }

    #[test]
    fn success_ratio_examples() {
        let r = success_ratio(&counters(375_000, 250_957, 124_043, 6_784)).unwrap();
        assert_eq!(libm::round(r * 10_000.0) / 100.0, 65.11);
        assert_eq!(
            success_ratio(&counters(375_000, 375_000, 0, 0)).unwrap(),
            1.0
        );
        assert_eq!(success_ratio(&counters(10, 0, 10, 0)).unwrap(), 0.0);
        assert_eq!(
            success_ratio(&RunCounters::default()),
            Err(MetricError::NothingCreated)
        );
    }

    #[test]
    fn time_ratio_examples() {
        assert!((time_ratio(4.404, 1.590).unwrap() - 2.769).abs() < 1e-3);
        assert!((time_ratio(1.54, 1.51).unwrap() - 1.02).abs() < 5e-3);
        assert_eq!(time_ratio(2.0, 2.0).unwrap(), 1.0);
        assert_eq!(time_ratio(1.0, 0.0), Err(MetricError::ZeroPhase2));
    }

    #[test]
    fn nearest_rank() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile_nearest_rank(&xs, 50.0), Some(2.0));
        assert_eq!(percentile_nearest_rank(&xs, 75.0), Some(3.0));
        assert_eq!(percentile_nearest_rank(&xs, 99.0), Some(4.0));
        assert_eq!(percentile_nearest_rank(&xs, 0.0), Some(1.0));
        assert_eq!(percentile_nearest_rank(&[], 50.0), None);
    }

    #[test]
    fn summary_moments() {
        let s = LatencySummary::from_samples("x", vec![4.0, 1.0, 3.0, 2.0]);
        assert_eq!(s.mean, 2.5);
        assert!((s.std - libm::sqrt(1.25)).abs() < 1e-12);
        assert_eq!((s.p50, s.p95, s.p99, s.count), (2.0, 4.0, 4.0, 4));
        assert!(s.p50 <= s.p95 && s.p95 <= s.p99);
    }

    #[test]
    fn e2e_from_leader_commit() {
        assert_eq!(e2e_latency(10.0, Some(11.0)), Some(1.0));
        assert_eq!(e2e_latency(10.0, None), None);
    }

    #[test]
    fn conservation_check() {
        let mut c = counters(100, 80, 20, 5);
        assert!(c.check().is_ok());
        c.committed_valid -= 1;
        assert!(c.check().is_err());
        c.endorsed_uncommitted = 1;
        assert!(c.check().is_ok());
        c.dropped_capacity = 15;
        assert!(c.check().is_err());
    }
}
