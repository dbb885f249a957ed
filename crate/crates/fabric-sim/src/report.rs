//! Report files: a CSV summary with one row per run, JSON-lines traces and
//! a manifest. Output is a pure function of the runs, so the same config
//! and seed always produce the same bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fabric_sim_core::metrics::LatencySummary;
use fabric_sim_core::sim::{DropReason, RunStatus, RunSummary};
use fabric_sim_core::workload::TxStatus;
use fabric_sim_core::{RunResult, ScenarioConfig};
use serde::{Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const TOOL: &str = "fabric-sim";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ReportError + '_ {
    move |source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// SHA-256 of the config as JSON with sorted keys.
pub fn config_hash(cfg: &ScenarioConfig) -> String {
    let canonical = serde_json::to_value(cfg).expect("config serializes");
    let bytes = serde_json::to_vec(&canonical).expect("value serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// Six significant digits, trailing zeros trimmed. NaN becomes the empty
/// string.
pub fn fmt_sig(x: f64) -> String {
    if x.is_nan() {
        return String::new();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf" } else { "-inf" }.into();
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mant.to_string()))
    }
}

fn trim_zeros(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

/// A float written to JSON with six significant digits; NaN is `null`.
#[derive(Debug, Clone, Copy)]
pub struct Sig(pub f64);

impl Serialize for Sig {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return s.serialize_none();
        }
        let rounded: f64 = fmt_sig(self.0).parse().expect("formatted float parses");
        s.serialize_f64(rounded)
    }
}

#[derive(Debug, Clone)]
pub enum RowOutcome {
    Done(Box<RunSummary>),
    Failed { kind: &'static str, message: String },
}

/// One line of `summary.csv`.
#[derive(Debug, Clone)]
pub struct SummaryRow {
    pub config_hash: String,
    pub config: ScenarioConfig,
    /// Swept parameters as `key=value`.
    pub params: Vec<(String, String)>,
    pub outcome: RowOutcome,
}

impl SummaryRow {
    pub fn new(config: ScenarioConfig, params: Vec<(String, String)>, outcome: RowOutcome) -> Self {
        Self {
            config_hash: config_hash(&config),
            config,
            params,
            outcome,
        }
    }

    pub fn summary(&self) -> Option<&RunSummary> {
        match &self.outcome {
            RowOutcome::Done(s) => Some(s),
            RowOutcome::Failed { .. } => None,
        }
    }

    pub fn summary_mut(&mut self) -> Option<&mut RunSummary> {
        match &mut self.outcome {
            RowOutcome::Done(s) => Some(s),
            RowOutcome::Failed { .. } => None,
        }
    }
}

const STAGES: [&str; 6] = [
    "block_creation",
    "endorse",
    "e2e",
    "phase1",
    "phase2",
    "commit_queue",
];
const STATS: [&str; 6] = ["mean", "std", "p50", "p95", "p99", "count"];

const LEAD: [&str; 22] = [
    "config_hash",
    "name",
    "seed",
    "params",
    "outcome",
    "error",
    "peers",
    "leader",
    "tau",
    "dissemination",
    "commit_mode",
    "block_size",
    "rate_per_client",
    "dependency_prob",
    "vscc_core_scale",
    "waiting",
    "created",
    "endorsed",
    "dropped",
    "dropped_capacity",
    "dropped_quorum",
    "committed_valid",
];

const MID: [&str; 7] = [
    "committed_invalid_mvcc",
    "unendorsed_at_horizon",
    "endorsed_uncommitted",
    "success_ratio",
    "end_time",
    "blocks",
    "mean_block_size",
];

const TAIL: [&str; 6] = [
    "e2e_tps",
    "commit_tps",
    "endorsement_tps",
    "performance_ratio",
    "time_ratio",
    "multi_eligible_fraction",
];

pub fn summary_header() -> Vec<String> {
    let mut h: Vec<String> = LEAD
        .iter()
        .chain(MID.iter())
        .map(|s| s.to_string())
        .collect();
    for stage in STAGES {
        for stat in STATS {
            h.push(format!("{stage}_{stat}"));
        }
    }
    h.extend(TAIL.iter().map(|s| s.to_string()));
    h
}

fn stage_of<'a>(s: &'a RunSummary, stage: &str) -> &'a LatencySummary {
    match stage {
        "block_creation" => &s.block_creation,
        "endorse" => &s.endorse,
        "e2e" => &s.e2e,
        "phase1" => &s.phase1,
        "phase2" => &s.phase2,
        _ => &s.commit_queue,
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

pub fn status_str(s: RunStatus) -> &'static str {
    match s {
        RunStatus::Drained => "drained",
        RunStatus::Truncated => "truncated",
    }
}

pub fn summary_record(row: &SummaryRow) -> Vec<String> {
    let c = &row.config;
    let params = row
        .params
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";");
    let (outcome, error) = match &row.outcome {
        RowOutcome::Done(s) => (status_str(s.status).to_string(), String::new()),
        RowOutcome::Failed { kind, message } => (kind.to_string(), message.clone()),
    };
    let mut r = vec![
        row.config_hash.clone(),
        c.name.clone().unwrap_or_default(),
        c.seed.to_string(),
        params,
        outcome,
        error,
        c.peers.count.to_string(),
        c.leader.kind.as_str().to_string(),
        c.leader.tau.to_string(),
        c.dissemination.label(),
        c.commit_mode.as_str().to_string(),
        if c.cut_rule.block_size == u32::MAX {
            String::new()
        } else {
            c.cut_rule.block_size.to_string()
        },
        fmt_sig(c.workload.rate_per_client),
        fmt_sig(c.workload.dependency_prob),
        fmt_sig(c.commit_model.vscc_core_scale),
        c.waiting.enabled.to_string(),
    ];
    let width = summary_header().len();
    let Some(s) = row.summary() else {
        r.resize(width, String::new());
        return r;
    };
    let k = &s.counters;
    for v in [
        k.created,
        k.endorsed,
        k.dropped,
        k.dropped_capacity,
        k.dropped_quorum,
        k.committed_valid,
        k.committed_invalid_mvcc,
        k.unendorsed_at_horizon,
        k.endorsed_uncommitted,
    ] {
        r.push(v.to_string());
    }
    r.push(opt(s.success_ratio));
    r.push(fmt_sig(s.end_time));
    r.push(s.blocks.to_string());
    r.push(fmt_sig(s.mean_block_size));
    for stage in STAGES {
        let l = stage_of(s, stage);
        for x in [l.mean, l.std, l.p50, l.p95, l.p99] {
            r.push(fmt_sig(x));
        }
        r.push(l.count.to_string());
    }
    let t = &s.throughput;
    r.push(fmt_sig(t.e2e_tps));
    r.push(fmt_sig(t.commit_tps));
    r.push(fmt_sig(t.endorsement_tps));
    r.push(opt(t.performance_ratio));
    r.push(opt(t.time_ratio));
    r.push(fmt_sig(s.multi_eligible_fraction));
    debug_assert_eq!(r.len(), width);
    r
}

fn csv_err(path: &Path, e: csv::Error) -> ReportError {
    let source = match e.into_kind() {
        csv::ErrorKind::Io(io) => io,
        other => std::io::Error::other(format!("{other:?}")),
    };
    ReportError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(summary_header())
        .map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(summary_record(row))
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_peers_csv(path: &Path, rows: &[SummaryRow]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record([
        "config_hash",
        "seed",
        "peer",
        "height",
        "commit_tps",
        "p1_mean",
        "p2_mean",
        "commit_mean",
        "remote_fetch_fraction",
        "e2e_mean",
    ])
    .map_err(|e| csv_err(path, e))?;
    for row in rows {
        let Some(s) = row.summary() else { continue };
        for p in &s.peers {
            w.write_record([
                row.config_hash.clone(),
                row.config.seed.to_string(),
                p.peer.0.to_string(),
                p.height.to_string(),
                fmt_sig(p.commit_tps),
                fmt_sig(p.p1_mean),
                fmt_sig(p.p2_mean),
                fmt_sig(p.commit_mean),
                fmt_sig(p.remote_fetch_fraction),
                fmt_sig(p.e2e_mean),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
    }
    w.flush().map_err(io_err(path))
}

#[derive(Serialize)]
struct TxLine {
    tx: usize,
    client: u32,
    created_at: Sig,
    parent: Option<u32>,
    status: TxStatus,
    drop_reason: Option<DropReason>,
    endorser: Option<u16>,
    routed_at: Sig,
    endorse_start: Sig,
    endorse_end: Sig,
    ordered_at: Sig,
    block: Option<u64>,
    index: Option<u32>,
    committed_at: Sig,
    e2e: Sig,
}

#[derive(Serialize)]
struct PeerTiming {
    peer: usize,
    delivered_at: Sig,
    phase1_start: Sig,
    phase1_end: Sig,
    phase2_start: Sig,
    phase2_end: Sig,
    remote_fetch: bool,
}

#[derive(Serialize)]
struct BlockLine {
    block: u64,
    size: usize,
    first_tx_enqueued_at: Sig,
    cut_at: Sig,
    creation_time: Sig,
    delivered_at: Sig,
    first_commit_at: Sig,
    first_commit_peer: Option<u16>,
    invalid: u32,
    peers: Vec<PeerTiming>,
}

#[derive(Serialize)]
struct WaitLine {
    at: Sig,
    kind: fabric_sim_core::coordination::WaitEventKind,
    leader: u16,
    lagger: u16,
    gap_at_event: u64,
}

fn write_lines<T: Serialize>(
    path: &Path,
    items: impl Iterator<Item = T>,
) -> Result<(), ReportError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, &item).map_err(|e| ReportError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
        w.write_all(b"\n").map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_tx_trace(path: &Path, result: &RunResult) -> Result<(), ReportError> {
    write_lines(
        path,
        result.txs.iter().enumerate().map(|(i, t)| TxLine {
            tx: i,
            client: t.client,
            created_at: Sig(t.created_at),
            parent: t.parent.map(|p| p.0),
            status: t.status,
            drop_reason: t.drop_reason,
            endorser: t.endorser.map(|p| p.0),
            routed_at: Sig(t.routed_at),
            endorse_start: Sig(t.endorse_start),
            endorse_end: Sig(t.endorse_end),
            ordered_at: Sig(t.ordered_at),
            block: t.pos.map(|p| p.block),
            index: t.pos.map(|p| p.index),
            committed_at: Sig(t.committed_at),
            e2e: Sig(t.e2e().unwrap_or(f64::NAN)),
        }),
    )
}

pub fn write_block_trace(path: &Path, result: &RunResult) -> Result<(), ReportError> {
    write_lines(
        path,
        result.blocks.iter().map(|b| BlockLine {
            block: b.block.block_num,
            size: b.block.txs.len(),
            first_tx_enqueued_at: Sig(b.block.first_tx_enqueued_at),
            cut_at: Sig(b.block.cut_at),
            creation_time: Sig(b.block.creation_time()),
            delivered_at: Sig(b.delivered_at),
            first_commit_at: Sig(b.first_commit.map_or(f64::NAN, |(t, _)| t)),
            first_commit_peer: b.first_commit.map(|(_, p)| p.0),
            invalid: b.invalid,
            peers: b
                .timings
                .iter()
                .enumerate()
                .map(|(p, t)| PeerTiming {
                    peer: p,
                    delivered_at: Sig(t.delivered_at),
                    phase1_start: Sig(t.phase1_start),
                    phase1_end: Sig(t.phase1_end),
                    phase2_start: Sig(t.phase2_start),
                    phase2_end: Sig(t.phase2_end),
                    remote_fetch: t.remote_fetch,
                })
                .collect(),
        }),
    )
}

pub fn write_wait_trace(path: &Path, result: &RunResult) -> Result<(), ReportError> {
    write_lines(
        path,
        result.waits.iter().map(|w| WaitLine {
            at: Sig(w.at),
            kind: w.kind,
            leader: w.leader.0,
            lagger: w.lagger.0,
            gap_at_event: w.gap_at_event,
        }),
    )
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    config_hash: &'a str,
    seed: u64,
    outcome: String,
    files: Vec<&'static str>,
    config: &'a ScenarioConfig,
}

#[derive(Serialize)]
struct SweepEntry<'a> {
    config_hash: &'a str,
    name: Option<&'a str>,
    seed: u64,
    params: Vec<String>,
    outcome: String,
}

#[derive(Serialize)]
struct SweepManifest<'a> {
    tool: &'static str,
    version: &'static str,
    rows: Vec<SweepEntry<'a>>,
    files: Vec<&'static str>,
}

fn outcome_str(row: &SummaryRow) -> String {
    match &row.outcome {
        RowOutcome::Done(s) => status_str(s.status).into(),
        RowOutcome::Failed { kind, .. } => (*kind).into(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), ReportError> {
    let mut s = serde_json::to_string_pretty(value).expect("manifest serializes");
    s.push('\n');
    fs::write(path, s).map_err(io_err(path))
}

fn ensure_dir(dir: &Path) -> Result<(), ReportError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

/// Writes every file for a single run into `dir` and returns their names.
pub fn write_run(
    dir: &Path,
    row: &SummaryRow,
    result: Option<&RunResult>,
) -> Result<Vec<&'static str>, ReportError> {
    ensure_dir(dir)?;
    let mut files = vec!["summary.csv"];
    write_summary_csv(&dir.join("summary.csv"), std::slice::from_ref(row))?;
    if row.config.metrics.per_peer {
        write_peers_csv(&dir.join("peers.csv"), std::slice::from_ref(row))?;
        files.push("peers.csv");
    }
    if let (Some(result), true) = (result, row.config.metrics.trace) {
        write_tx_trace(&dir.join("transactions.jsonl"), result)?;
        write_block_trace(&dir.join("blocks.jsonl"), result)?;
        write_wait_trace(&dir.join("waits.jsonl"), result)?;
        files.extend(["transactions.jsonl", "blocks.jsonl", "waits.jsonl"]);
    }
    files.push("manifest.json");
    write_json(
        &dir.join("manifest.json"),
        &RunManifest {
            tool: TOOL,
            version: VERSION,
            config_hash: &row.config_hash,
            seed: row.config.seed,
            outcome: outcome_str(row),
            files: files.clone(),
            config: &row.config,
        },
    )?;
    Ok(files)
}

/// Sweep output: one summary row per run plus a manifest of the rows.
pub fn write_sweep(dir: &Path, rows: &[SummaryRow]) -> Result<Vec<&'static str>, ReportError> {
    ensure_dir(dir)?;
    let mut files = vec!["summary.csv"];
    write_summary_csv(&dir.join("summary.csv"), rows)?;
    if rows.iter().any(|r| r.config.metrics.per_peer) {
        write_peers_csv(&dir.join("peers.csv"), rows)?;
        files.push("peers.csv");
    }
    files.push("manifest.json");
    let entries = rows
        .iter()
        .map(|r| SweepEntry {
            config_hash: &r.config_hash,
            name: r.config.name.as_deref(),
            seed: r.config.seed,
            params: r.params.iter().map(|(k, v)| format!("{k}={v}")).collect(),
            outcome: outcome_str(r),
        })
        .collect();
    write_json(
        &dir.join("manifest.json"),
        &SweepManifest {
            tool: TOOL,
            version: VERSION,
            rows: entries,
            files: files.clone(),
        },
    )?;
    Ok(files)
}
