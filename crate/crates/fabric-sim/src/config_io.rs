//! Loading and emitting scenario files.
//!
//! Files are JSON. Any key ending in `_ms` is read as milliseconds and
//! stored under the stripped key in seconds, so `"ack_timeout_ms": 1000`
//! and `"ack_timeout": 1.0` are the same thing. Giving both is an error.

use std::fs;
use std::path::{Path, PathBuf};

use fabric_sim_core::dist::{DistributionSpec, Family};
use fabric_sim_core::{FieldError, ScenarioConfig};
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: not valid JSON: {message}")]
    Syntax { path: String, message: String },
    #[error("invalid config:\n{}", render(.0))]
    Fields(Vec<FieldError>),
}

fn render(errors: &[FieldError]) -> String {
    errors
        .iter()
        .map(|e| format!("  {e}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl LoadError {
    pub fn fields(&self) -> &[FieldError] {
        match self {
            LoadError::Fields(v) => v,
            _ => &[],
        }
    }
}

/// Reads, converts and validates a scenario file. Empirical sample files
/// named in a distribution's `path` are resolved against the config's
/// directory.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, LoadError> {
    let text = fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base)
}

pub fn parse_config(text: &str, base_dir: &Path) -> Result<ScenarioConfig, LoadError> {
    let value: Value = serde_json::from_str(text).map_err(|e| LoadError::Syntax {
        path: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    })?;
    from_value(value, base_dir)
}

/// Same as [`parse_config`] for an already parsed document.
pub fn from_value(mut value: Value, base_dir: &Path) -> Result<ScenarioConfig, LoadError> {
    let mut errors = Vec::new();
    normalize_ms(&mut value, "", &mut errors);
    if !errors.is_empty() {
        return Err(LoadError::Fields(errors));
    }
    let mut cfg: ScenarioConfig = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        LoadError::Fields(vec![FieldError::new(path, e.into_inner().to_string())])
    })?;
    resolve_sample_files(&mut cfg, base_dir, &mut errors);
    if !errors.is_empty() {
        return Err(LoadError::Fields(errors));
    }
    cfg.validate().map_err(LoadError::Fields)?;
    Ok(cfg)
}

/// Pretty JSON in seconds. `load(emit(c)) == c` for every valid config.
pub fn emit_config(cfg: &ScenarioConfig) -> String {
    let mut s = serde_json::to_string_pretty(cfg).expect("config serializes");
    s.push('\n');
    s
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn normalize_ms(value: &mut Value, prefix: &str, errors: &mut Vec<FieldError>) {
    match value {
        Value::Object(map) => {
            let ms_keys: Vec<String> = map
                .keys()
                .filter(|k| k.len() > 3 && k.ends_with("_ms"))
                .cloned()
                .collect();
            for key in ms_keys {
                let base = key[..key.len() - 3].to_string();
                let path = join(prefix, &key);
                if map.contains_key(&base) {
                    errors.push(FieldError::new(
                        path,
                        format!("both `{base}` and `{key}` given"),
                    ));
                    continue;
                }
                let mut v = map.remove(&key).expect("key listed above");
                match to_seconds(&mut v) {
                    Ok(()) => {
                        map.insert(base, v);
                    }
                    Err(msg) => errors.push(FieldError::new(path, msg)),
                }
            }
            for (k, v) in map.iter_mut() {
                normalize_ms(v, &join(prefix, k), errors);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter_mut().enumerate() {
                normalize_ms(v, &format!("{prefix}[{i}]"), errors);
            }
        }
        _ => {}
    }
}

fn div_1000(v: &mut Value) -> Result<(), &'static str> {
    match v.as_f64() {
        Some(x) => {
            *v = Value::from(x / 1000.0);
            Ok(())
        }
        None => Err("millisecond value must be a number"),
    }
}

fn to_seconds(v: &mut Value) -> Result<(), &'static str> {
    match v {
        Value::Number(_) => div_1000(v),
        Value::Array(items) => items.iter_mut().try_for_each(div_1000),
        // A distribution: its parameters are durations, `scale` is not.
        Value::Object(map) if map.contains_key("family") => scale_params(map),
        _ => Err("millisecond value must be a number, a list or a distribution"),
    }
}

fn scale_params(map: &mut Map<String, Value>) -> Result<(), &'static str> {
    match map.get_mut("params") {
        Some(Value::Array(items)) => items.iter_mut().try_for_each(div_1000),
        Some(_) => Err("params must be a list"),
        None => Ok(()),
    }
}

/// One float per line, in seconds. Blank lines and `#` comments are skipped.
pub fn read_samples(path: &Path) -> Result<Vec<f64>, String> {
    let text =
        fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let x: f64 = line
            .parse()
            .map_err(|_| format!("{}:{}: not a number: {line}", path.display(), i + 1))?;
        out.push(x);
    }
    Ok(out)
}

fn resolve_one(d: &mut DistributionSpec, field: &str, base: &Path, errors: &mut Vec<FieldError>) {
    let Some(p) = &d.path else { return };
    if d.family != Family::Empirical {
        errors.push(FieldError::new(
            format!("{field}.path"),
            "only empirical distributions read sample files",
        ));
        return;
    }
    match read_samples(&base.join(p)) {
        Ok(xs) => d.params = xs,
        Err(msg) => errors.push(FieldError::new(format!("{field}.path"), msg)),
    }
}

fn resolve_sample_files(cfg: &mut ScenarioConfig, base: &Path, errors: &mut Vec<FieldError>) {
    let e = &mut cfg.endorsement;
    resolve_one(&mut e.execute, "endorsement.execute", base, errors);
    resolve_one(&mut e.ack, "endorsement.ack", base, errors);
    resolve_one(&mut e.overhead, "endorsement.overhead", base, errors);
    let m = &mut cfg.commit_model;
    resolve_one(&mut m.vscc, "commit_model.vscc", base, errors);
    resolve_one(
        &mut m.pvt_fetch_local,
        "commit_model.pvt_fetch_local",
        base,
        errors,
    );
    resolve_one(
        &mut m.pvt_fetch_remote,
        "commit_model.pvt_fetch_remote",
        base,
        errors,
    );
    resolve_one(&mut m.mvcc, "commit_model.mvcc", base, errors);
    resolve_one(&mut m.block_store, "commit_model.block_store", base, errors);
    resolve_one(&mut m.statedb, "commit_model.statedb", base, errors);
    if let Some(d) = &mut m.statedb_per_tx {
        resolve_one(d, "commit_model.statedb_per_tx", base, errors);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn parse(text: &str) -> Result<ScenarioConfig, LoadError> {
        parse_config(text, Path::new("."))
    }

    fn base_json() -> Value {
        serde_json::to_value(presets::preset("waiting-2peer").unwrap()).unwrap()
    }

    #[test]
    fn round_trip_every_preset() {
        for name in presets::names() {
            for cfg in presets::expand(name).unwrap() {
                let back = parse(&emit_config(&cfg)).unwrap();
                assert_eq!(back, cfg, "{name}");
            }
        }
    }

    #[test]
    fn ms_keys_convert() {
        let mut v = base_json();
        let d = v["dissemination"].as_object_mut().unwrap();
        d.remove("ack_timeout");
        d.insert("ack_timeout_ms".into(), Value::from(1500));
        v["endorsement"].as_object_mut().unwrap().remove("execute");
        v["endorsement"]["execute_ms"] =
            serde_json::json!({"family": "normal", "params": [806, 157]});
        let cfg = from_value(v, Path::new(".")).unwrap();
        assert_eq!(cfg.dissemination.ack_timeout, 1.5);
        assert_eq!(cfg.endorsement.execute.params, vec![0.806, 0.157]);
    }

    #[test]
    fn both_forms_rejected() {
        let mut v = base_json();
        v["horizon_ms"] = Value::from(1000);
        let err = from_value(v, Path::new(".")).unwrap_err();
        assert_eq!(err.fields()[0].path, "horizon_ms");
    }

    #[test]
    fn unknown_field_reports_path() {
        let mut v = base_json();
        v["workload"]["rate_per_clent"] = Value::from(3);
        let err = from_value(v, Path::new(".")).unwrap_err();
        let f = &err.fields()[0];
        assert!(f.path.starts_with("workload"), "{f}");
        assert!(f.message.contains("rate_per_clent"), "{f}");
    }

    #[test]
    fn invariant_violations_listed() {
        let mut v = base_json();
        v["dissemination"]["max_peer_count"] = Value::from(2);
        v["workload"]["rate_per_client"] = Value::from(-1.0);
        v["workload"]["arrival_process"] = Value::from("poisson");
        let err = from_value(v, Path::new(".")).unwrap_err();
        let paths: Vec<&str> = err.fields().iter().map(|f| f.path.as_str()).collect();
        assert!(paths.contains(&"workload.rate_per_client"), "{paths:?}");
        assert!(
            paths.iter().any(|p| p.starts_with("dissemination")),
            "{paths:?}"
        );
    }

    #[test]
    fn waiting_preset_shape() {
        let cfg = parse(&emit_config(&presets::preset("waiting-2peer").unwrap())).unwrap();
        assert_eq!(cfg.peers.count, 2);
        assert_eq!(cfg.waiting.tau, 5);
        assert_eq!(cfg.waiting.baseline_means, vec![1.3, 2.3]);
        assert_eq!(cfg.waiting.boosted_mean, 1.8);
        assert_eq!(cfg.cut_rule.timeout, 2.0);
    }

    #[test]
    fn empirical_file() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("vscc.txt"), "# seconds\n0.5\n\n0.7\n").unwrap();
        let mut v = base_json();
        v["commit_model"]["vscc"] = serde_json::json!({"family": "empirical", "path": "vscc.txt"});
        let cfg = from_value(v.clone(), dir.path()).unwrap();
        assert_eq!(cfg.commit_model.vscc.params, vec![0.5, 0.7]);

        v["commit_model"]["vscc"]["path"] = Value::from("missing.txt");
        let err = from_value(v, dir.path()).unwrap_err();
        assert_eq!(err.fields()[0].path, "commit_model.vscc.path");
    }

    #[test]
    fn syntax_error() {
        assert!(matches!(parse("{ nope"), Err(LoadError::Syntax { .. })));
    }
}
