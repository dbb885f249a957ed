//! Parameter sweeps: base configs × grid product × seeds, run in parallel.
//!
//! Grid keys are dotted config paths (`cut_rule.block_size`) or a bare leaf
//! name that occurs exactly once in the config (`block_size`).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use fabric_sim_core::commit::CommitMode;
use fabric_sim_core::config::GridValue;
use fabric_sim_core::{RunResult, ScenarioConfig, SimError};
use rayon::prelude::*;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::config_io;
use crate::report::{config_hash, RowOutcome, SummaryRow};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("grid key `{0}` does not name a config field")]
    UnknownKey(String),
    #[error("grid key `{key}` is ambiguous; use one of: {}", .candidates.join(", "))]
    Ambiguous {
        key: String,
        candidates: Vec<String>,
    },
    #[error("bad grid argument `{0}`; expected key=v1,v2,...")]
    BadArg(String),
    #[error("bad seed list `{0}`; expected a..b (inclusive) or a,b,c")]
    BadSeeds(String),
}

pub fn parse_value(s: &str) -> GridValue {
    match s {
        "true" => GridValue::Bool(true),
        "false" => GridValue::Bool(false),
        _ => s
            .parse::<f64>()
            .map(GridValue::Num)
            .unwrap_or_else(|_| GridValue::Str(s.to_string())),
    }
}

/// `key=v1,v2,...`
pub fn parse_grid_arg(arg: &str) -> Result<(String, Vec<GridValue>), GridError> {
    let (k, vs) = arg
        .split_once('=')
        .ok_or_else(|| GridError::BadArg(arg.to_string()))?;
    let values: Vec<GridValue> = vs
        .split(',')
        .filter(|v| !v.is_empty())
        .map(parse_value)
        .collect();
    if k.is_empty() || values.is_empty() {
        return Err(GridError::BadArg(arg.to_string()));
    }
    Ok((k.to_string(), values))
}

/// `a..b` (both ends included) or a comma list.
pub fn parse_seeds(arg: &str) -> Result<Vec<u64>, GridError> {
    let bad = || GridError::BadSeeds(arg.to_string());
    if let Some((a, b)) = arg.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| bad())?;
        let b: u64 = b.trim().parse().map_err(|_| bad())?;
        if b < a {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    arg.split(',')
        .map(|s| s.trim().parse().map_err(|_| bad()))
        .collect()
}

fn to_json(v: &GridValue) -> Value {
    match v {
        GridValue::Bool(b) => Value::Bool(*b),
        GridValue::Num(x) if x.fract() == 0.0 && x.abs() < 9.0e15 => {
            if *x >= 0.0 {
                Value::from(*x as u64)
            } else {
                Value::from(*x as i64)
            }
        }
        GridValue::Num(x) => Value::from(*x),
        GridValue::Str(s) => Value::String(s.clone()),
    }
}

pub fn display_value(v: &GridValue) -> String {
    match v {
        GridValue::Bool(b) => b.to_string(),
        GridValue::Num(x) => crate::report::fmt_sig(*x),
        GridValue::Str(s) => s.clone(),
    }
}

fn find_leaf(v: &Value, leaf: &str, prefix: &str, out: &mut Vec<String>) {
    if let Value::Object(map) = v {
        for (k, child) in map {
            if prefix.is_empty() && (k == "sweep" || k == "name") {
                continue;
            }
            let path = if prefix.is_empty() {
                k.clone()
            } else {
                format!("{prefix}.{k}")
            };
            if k == leaf {
                out.push(path.clone());
            }
            find_leaf(child, leaf, &path, out);
        }
    }
}

/// Resolves a grid key against a serialized config to a dotted path.
pub fn resolve_key(cfg: &Value, key: &str) -> Result<String, GridError> {
    if key.contains('.') {
        let parts: Vec<&str> = key.split('.').collect();
        let mut node = cfg;
        for part in &parts[..parts.len() - 1] {
            node = node
                .get(part)
                .filter(|n| n.is_object())
                .ok_or_else(|| GridError::UnknownKey(key.to_string()))?;
        }
        return if node.is_object() {
            Ok(key.to_string())
        } else {
            Err(GridError::UnknownKey(key.to_string()))
        };
    }
    let mut hits = Vec::new();
    find_leaf(cfg, key, "", &mut hits);
    match hits.len() {
        0 => Err(GridError::UnknownKey(key.to_string())),
        1 => Ok(hits.pop().expect("one hit")),
        _ => Err(GridError::Ambiguous {
            key: key.to_string(),
            candidates: hits,
        }),
    }
}

fn set_path(root: &mut Value, path: &str, value: Value) {
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        node = node
            .as_object_mut()
            .expect("resolved path walks objects")
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Map::new()));
    }
    node.as_object_mut()
        .expect("resolved path ends in an object")
        .insert(parts[parts.len() - 1].to_string(), value);
}

/// One point of the sweep before it runs.
#[derive(Debug, Clone)]
pub struct Point {
    pub params: Vec<(String, String)>,
    pub config: Result<ScenarioConfig, (ScenarioConfig, String)>,
}

/// Cartesian product in key order, last key fastest, then seeds.
pub fn expand_points(
    base: &ScenarioConfig,
    grid: &BTreeMap<String, Vec<GridValue>>,
    seeds: &[u64],
) -> Result<Vec<Point>, GridError> {
    let mut stripped = base.clone();
    stripped.sweep = None;
    let base_value = serde_json::to_value(&stripped).expect("config serializes");
    let keys: Vec<(&String, String, &Vec<GridValue>)> = grid
        .iter()
        .map(|(k, vs)| resolve_key(&base_value, k).map(|p| (k, p, vs)))
        .collect::<Result<_, _>>()?;
    let seeds: Vec<u64> = if seeds.is_empty() {
        vec![base.seed]
    } else {
        seeds.to_vec()
    };
    let combos: usize = keys.iter().map(|(_, _, v)| v.len()).product();
    let mut out = Vec::with_capacity(combos * seeds.len());
    for c in 0..combos {
        let mut rem = c;
        let mut picks = vec![0usize; keys.len()];
        for (i, (_, _, vs)) in keys.iter().enumerate().rev() {
            picks[i] = rem % vs.len();
            rem /= vs.len();
        }
        for &seed in &seeds {
            let mut v = base_value.clone();
            let mut params = Vec::new();
            for ((key, path, vs), &pick) in keys.iter().zip(&picks) {
                set_path(&mut v, path, to_json(&vs[pick]));
                params.push((key.to_string(), display_value(&vs[pick])));
            }
            v["seed"] = Value::from(seed);
            let config = config_io::from_value(v, Path::new(".")).map_err(|e| {
                let mut fallback = stripped.clone();
                fallback.seed = seed;
                (fallback, e.to_string())
            });
            out.push(Point { params, config });
        }
    }
    Ok(out)
}

/// Runs one config and summarizes it.
pub fn run_one(cfg: &ScenarioConfig) -> (RowOutcome, Option<RunResult>) {
    match fabric_sim_core::run(cfg) {
        Ok(result) => {
            let summary = result.summarize(cfg.metrics.warmup_blocks);
            (RowOutcome::Done(Box::new(summary)), Some(result))
        }
        Err(SimError::Config(errors)) => (
            RowOutcome::Failed {
                kind: "config_error",
                message: errors
                    .iter()
                    .map(|e| e.to_string())
                    .collect::<Vec<_>>()
                    .join("; "),
            },
            None,
        ),
        Err(SimError::Integrity(e)) => (
            RowOutcome::Failed {
                kind: "integrity_error",
                message: e.to_string(),
            },
            None,
        ),
    }
}

/// Pipelined over serial commit TPS for every pair of rows that differ
/// only in commit mode. Both rows of a pair get the ratio.
pub fn pair_performance_ratios(rows: &mut [SummaryRow]) {
    let mut pairs: HashMap<String, [Option<usize>; 2]> = HashMap::new();
    for (i, row) in rows.iter().enumerate() {
        if row.summary().is_none() {
            continue;
        }
        let mut key_cfg = row.config.clone();
        let slot = match key_cfg.commit_mode {
            CommitMode::Serial => 0,
            CommitMode::Pipelined => 1,
        };
        key_cfg.commit_mode = CommitMode::Serial;
        pairs.entry(config_hash(&key_cfg)).or_default()[slot] = Some(i);
    }
    for [s, p] in pairs.into_values() {
        let (Some(s), Some(p)) = (s, p) else { continue };
        let serial = rows[s].summary().map_or(0.0, |x| x.throughput.commit_tps);
        let piped = rows[p].summary().map_or(0.0, |x| x.throughput.commit_tps);
        if serial > 0.0 {
            let ratio = piped / serial;
            for i in [s, p] {
                if let Some(sm) = rows[i].summary_mut() {
                    sm.throughput.performance_ratio = Some(ratio);
                }
            }
        }
    }
}

/// Merges the config's own plan with command-line overrides.
pub fn effective_plan(
    cfg: &ScenarioConfig,
    grid: &[(String, Vec<GridValue>)],
    seeds: Option<&[u64]>,
) -> (BTreeMap<String, Vec<GridValue>>, Vec<u64>) {
    let mut g = cfg
        .sweep
        .as_ref()
        .map(|p| p.grid.clone())
        .unwrap_or_default();
    for (k, v) in grid {
        g.insert(k.clone(), v.clone());
    }
    let s = match seeds {
        Some(s) => s.to_vec(),
        None => cfg
            .sweep
            .as_ref()
            .map(|p| p.seeds.clone())
            .unwrap_or_default(),
    };
    (g, s)
}

/// Every base × grid × seed, in that order. Failures stay in their row.
pub fn run_sweep(
    bases: &[ScenarioConfig],
    grid: &[(String, Vec<GridValue>)],
    seeds: Option<&[u64]>,
) -> Result<Vec<SummaryRow>, GridError> {
    let mut points = Vec::new();
    for base in bases {
        let (g, s) = effective_plan(base, grid, seeds);
        points.extend(expand_points(base, &g, &s)?);
    }
    let mut rows: Vec<SummaryRow> = points
        .into_par_iter()
        .map(|p| match p.config {
            Ok(cfg) => {
                let (outcome, _) = run_one(&cfg);
                SummaryRow::new(cfg, p.params, outcome)
            }
            Err((cfg, message)) => SummaryRow::new(
                cfg,
                p.params,
                RowOutcome::Failed {
                    kind: "config_error",
                    message,
                },
            ),
        })
        .collect();
    pair_performance_ratios(&mut rows);
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn small() -> ScenarioConfig {
        let mut cfg = presets::preset("waiting-2peer").unwrap();
        cfg.workload.pool_size = Some(200);
        cfg
    }

    #[test]
    fn seeds_and_grid_args() {
        assert_eq!(parse_seeds("1..4").unwrap(), vec![1, 2, 3, 4]);
        assert_eq!(parse_seeds("7,3").unwrap(), vec![7, 3]);
        assert!(parse_seeds("4..1").is_err());
        let (k, v) = parse_grid_arg("commit_mode=serial,pipelined").unwrap();
        assert_eq!(k, "commit_mode");
        assert_eq!(
            v,
            vec![
                GridValue::Str("serial".into()),
                GridValue::Str("pipelined".into())
            ]
        );
        assert_eq!(
            parse_grid_arg("x=1,true").unwrap().1,
            vec![GridValue::Num(1.0), GridValue::Bool(true)]
        );
        assert!(parse_grid_arg("nokey").is_err());
    }

    #[test]
    fn key_resolution() {
        let v = serde_json::to_value(small()).unwrap();
        assert_eq!(
            resolve_key(&v, "block_size").unwrap(),
            "cut_rule.block_size"
        );
        assert_eq!(
            resolve_key(&v, "dependency_prob").unwrap(),
            "workload.dependency_prob"
        );
        assert_eq!(
            resolve_key(&v, "commit_model.vscc_core_scale").unwrap(),
            "commit_model.vscc_core_scale"
        );
        assert!(matches!(
            resolve_key(&v, "tau"),
            Err(GridError::Ambiguous { .. })
        ));
        assert!(matches!(
            resolve_key(&v, "nope"),
            Err(GridError::UnknownKey(_))
        ));
        assert!(matches!(
            resolve_key(&v, "nope.deeper"),
            Err(GridError::UnknownKey(_))
        ));
    }

    #[test]
    fn row_count_is_grid_times_seeds() {
        let mut grid = BTreeMap::new();
        grid.insert(
            "commit_mode".to_string(),
            vec![
                GridValue::Str("serial".into()),
                GridValue::Str("pipelined".into()),
            ],
        );
        grid.insert(
            "dependency_prob".to_string(),
            vec![
                GridValue::Num(0.0),
                GridValue::Num(0.5),
                GridValue::Num(1.0),
            ],
        );
        let pts = expand_points(&small(), &grid, &[1, 2]).unwrap();
        assert_eq!(pts.len(), 12);
        assert!(pts.iter().all(|p| p.config.is_ok()));
        let empty = expand_points(&small(), &BTreeMap::new(), &[]).unwrap();
        assert_eq!(empty.len(), 1);
    }

    #[test]
    fn bad_value_becomes_failed_row() {
        let grid = vec![(
            "dependency_prob".to_string(),
            vec![GridValue::Num(0.5), GridValue::Num(7.0)],
        )];
        let rows = run_sweep(&[small()], &grid, None).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].summary().is_some());
        assert!(matches!(
            rows[1].outcome,
            RowOutcome::Failed {
                kind: "config_error",
                ..
            }
        ));
    }

    #[test]
    fn pipelined_pairs_get_ratio() {
        let grid = vec![(
            "commit_mode".to_string(),
            vec![
                GridValue::Str("serial".into()),
                GridValue::Str("pipelined".into()),
            ],
        )];
        let rows = run_sweep(&[small()], &grid, Some(&[3])).unwrap();
        let r0 = rows[0].summary().unwrap().throughput.performance_ratio;
        let r1 = rows[1].summary().unwrap().throughput.performance_ratio;
        assert!(r0.is_some());
        assert_eq!(r0, r1);
    }
}
