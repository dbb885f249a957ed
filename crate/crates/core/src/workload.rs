//! Client arrivals and dependency injection.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::FieldError;
use crate::kernel::Seconds;
use crate::rng::RngStream;
use crate::TxId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalProcess {
    /// Client `c` submits at `k / rate` for `k = 1, 2, ...`.
    #[default]
    Deterministic,
    Poisson,
    /// `pool_size` transactions all exist at `t = 0` and are fed in as
    /// capacity frees up (closed loop). `rate_per_client` is ignored.
    Pool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadConfig {
    pub num_clients: u32,
    pub rate_per_client: f64,
    pub duration: Seconds,
    #[serde(default)]
    pub dependency_prob: f64,
    #[serde(default)]
    pub arrival_process: ArrivalProcess,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_size: Option<u64>,
}

impl WorkloadConfig {
    pub fn validate(&self, errors: &mut Vec<FieldError>) {
        if self.num_clients == 0 {
            errors.push(FieldError::new("workload.num_clients", "must be >= 1"));
        }
        let pool = self.arrival_process == ArrivalProcess::Pool;
        if !pool && !(self.rate_per_client.is_finite() && self.rate_per_client > 0.0) {
            errors.push(FieldError::new("workload.rate_per_client", "must be > 0"));
        }
        if !pool && !(self.duration.is_finite() && self.duration > 0.0) {
            errors.push(FieldError::new("workload.duration", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.dependency_prob) {
            errors.push(FieldError::new(
                "workload.dependency_prob",
                "must lie in [0, 1]",
            ));
        }
        match (pool, self.pool_size) {
            (true, None) => errors.push(FieldError::new(
                "workload.pool_size",
                "required when arrival_process is pool",
            )),
            (true, Some(n)) if n > u64::from(u32::MAX) => {
                errors.push(FieldError::new("workload.pool_size", "too large"))
            }
            (false, Some(_)) => errors.push(FieldError::new(
                "workload.pool_size",
                "only valid with arrival_process = pool",
            )),
            _ => {}
        }
    }

    /// Number of arrivals per client under deterministic arrivals.
    pub fn deterministic_count_per_client(&self) -> u64 {
        // Guard against 250 * 300 landing on 74999.99999.
        libm::floor(self.rate_per_client * self.duration + 1e-9) as u64
    }

    /// Exact total for deterministic and pool workloads; `None` for Poisson.
    pub fn expected_total(&self) -> Option<u64> {
        match self.arrival_process {
            ArrivalProcess::Deterministic => {
                Some(u64::from(self.num_clients) * self.deterministic_count_per_client())
            }
            ArrivalProcess::Pool => self.pool_size,
            ArrivalProcess::Poisson => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TxStatus {
    InFlight,
    Endorsed,
    Dropped,
    CommittedValid,
    CommittedInvalidMvcc,
}

/// Arrival times for one client.
pub struct ClientArrivals {
    process: ArrivalProcess,
    rate: f64,
    duration: Seconds,
    k: u64,
    limit: u64,
    t: Seconds,
    rng: Option<RngStream>,
}

impl ClientArrivals {
    pub fn new(cfg: &WorkloadConfig, client: u32, master_seed: u64) -> Self {
        let rng = (cfg.arrival_process == ArrivalProcess::Poisson)
            .then(|| RngStream::new(master_seed, &alloc::format!("client{client}.arrivals")));
        let limit = match cfg.arrival_process {
            ArrivalProcess::Deterministic => cfg.deterministic_count_per_client(),
            ArrivalProcess::Poisson => u64::MAX,
            // Pool clients take every num_clients-th slot of the pool.
            ArrivalProcess::Pool => {
                let total = cfg.pool_size.unwrap_or(0);
                let n = u64::from(cfg.num_clients);
                let c = u64::from(client);
                total / n + u64::from(c < total % n)
            }
        };
        Self {
            process: cfg.arrival_process,
            rate: cfg.rate_per_client,
            duration: cfg.duration,
            k: 0,
            limit,
            t: 0.0,
            rng,
        }
    }
}

impl Iterator for ClientArrivals {
    type Item = Seconds;

    fn next(&mut self) -> Option<Seconds> {
        if self.k >= self.limit {
            return None;
        }
        self.k += 1;
        match self.process {
            ArrivalProcess::Deterministic => Some(self.k as f64 / self.rate),
            ArrivalProcess::Pool => Some(0.0),
            ArrivalProcess::Poisson => {
                let rng = self.rng.as_mut()?;
                self.t += -libm::log(1.0 - rng.next_f64()) / self.rate;
                if self.t > self.duration {
                    self.limit = 0;
                    None
                } else {
                    Some(self.t)
                }
            }
        }
    }
}

/// All arrivals, merged by time then client id.
pub fn generate_arrivals(cfg: &WorkloadConfig, master_seed: u64) -> Vec<(Seconds, u32)> {
    let mut out: Vec<(Seconds, u32)> = (0..cfg.num_clients)
        .flat_map(|c| ClientArrivals::new(cfg, c, master_seed).map(move |t| (t, c)))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    out
}

/// Set of transaction ids with O(1) insert, remove and uniform choice.
#[derive(Debug, Clone, Default)]
pub struct InFlightSet {
    members: Vec<TxId>,
    pos: Vec<u32>,
}

const ABSENT: u32 = u32::MAX;

impl InFlightSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, tx: TxId) -> bool {
        self.pos.get(tx.index()).is_some_and(|&p| p != ABSENT)
    }

    pub fn insert(&mut self, tx: TxId) -> bool {
        if self.contains(tx) {
            return false;
        }
        if self.pos.len() <= tx.index() {
            self.pos.resize(tx.index() + 1, ABSENT);
        }
        self.pos[tx.index()] = self.members.len() as u32;
        self.members.push(tx);
        true
    }

    pub fn remove(&mut self, tx: TxId) -> bool {
        if !self.contains(tx) {
            return false;
        }
        let at = self.pos[tx.index()] as usize;
        self.pos[tx.index()] = ABSENT;
        let last = self.members.pop().expect("non-empty");
        if last != tx {
            self.members[at] = last;
            self.pos[last.index()] = at as u32;
        }
        true
    }

    pub fn get(&self, i: usize) -> TxId {
        self.members[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = TxId> + '_ {
        self.members.iter().copied()
    }
}

/// With probability `p`, and only if something is in flight, picks a parent
/// uniformly from `in_flight`. Always consumes exactly one uniform draw for
/// the coin, plus one index draw when a parent is chosen.
pub fn assign_dependency(in_flight: &InFlightSet, p: f64, rng: &mut RngStream) -> Option<TxId> {
    let coin = rng.next_f64();
    if coin < p && !in_flight.is_empty() {
        Some(in_flight.get(rng.below(in_flight.len())))
    } else {
        None
    }
}
