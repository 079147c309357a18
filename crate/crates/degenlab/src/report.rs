//! Report assembly: schema-versioned JSON with a determinism hash over
//! everything except the timing block, and CSV emission at full double
//! precision.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::io::Write;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("io error writing `{path}`: {msg}")]
    Io { path: String, msg: String },
    #[error("serialization error: {0}")]
    Serialize(String),
}

#[derive(Debug, Serialize)]
pub struct Report {
    pub schema_version: u32,
    pub tool_version: String,
    pub command: String,
    /// Full configuration echo: CLI arguments and loaded config files.
    pub config: Value,
    pub seed: Option<u64>,
    pub results: Value,
    /// SHA-256 over (schema_version, tool_version, command, config, seed,
    /// results); the timing block below is excluded.
    pub determinism_hash: String,
    pub timings_ms: Value,
}

impl Report {
    pub fn new(
        command: &str,
        config: Value,
        seed: Option<u64>,
        results: Value,
        timings_ms: Value,
    ) -> Report {
        let hash = determinism_hash(command, &config, seed, &results);
        Report {
            schema_version: SCHEMA_VERSION,
            tool_version: crate::VERSION.to_string(),
            command: command.to_string(),
            config,
            seed,
            results,
            determinism_hash: hash,
            timings_ms,
        }
    }

    pub fn write_json(&self, path: &str) -> Result<(), ReportError> {
        let text = serde_json::to_string_pretty(self)
            .map_err(|e| ReportError::Serialize(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| ReportError::Io {
            path: path.to_string(),
            msg: e.to_string(),
        })
    }
}

pub fn determinism_hash(command: &str, config: &Value, seed: Option<u64>, results: &Value) -> String {
    let canonical = serde_json::json!({
        "schema_version": SCHEMA_VERSION,
        "tool_version": crate::VERSION,
        "command": command,
        "config": config,
        "seed": seed,
        "results": results,
    });
    let bytes = serde_json::to_vec(&canonical).expect("canonical report serializes");
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Converts any serializable value into a JSON tree for a report.
pub fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("report values serialize")
}

/// Writes an RFC-4180-style CSV: header row, LF line endings, 17
/// significant digits so values round-trip to identical doubles.
pub fn write_csv(path: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<(), ReportError> {
    let mut out = Vec::new();
    writeln!(out, "{}", header.join(",")).unwrap();
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format_full(*v)).collect();
        writeln!(out, "{}", cells.join(",")).unwrap();
    }
    std::fs::write(path, out).map_err(|e| ReportError::Io {
        path: path.to_string(),
        msg: e.to_string(),
    })
}

/// 17 significant digits: enough to reproduce any f64 exactly on parse.
pub fn format_full(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_timings() {
        let config = serde_json::json!({"a": 1});
        let results = serde_json::json!({"x": 2.5});
        let r1 = Report::new("test", config.clone(), Some(42), results.clone(),
            serde_json::json!({"total": 10.0}));
        let r2 = Report::new("test", config, Some(42), results,
            serde_json::json!({"total": 99999.0}));
        assert_eq!(r1.determinism_hash, r2.determinism_hash);
    }

    #[test]
    fn hash_tracks_results_and_seed() {
        let config = serde_json::json!({"a": 1});
        let base = Report::new("t", config.clone(), Some(1), serde_json::json!(1.0), Value::Null);
        let seed2 = Report::new("t", config.clone(), Some(2), serde_json::json!(1.0), Value::Null);
        let res2 = Report::new("t", config, Some(1), serde_json::json!(2.0), Value::Null);
        assert_ne!(base.determinism_hash, seed2.determinism_hash);
        assert_ne!(base.determinism_hash, res2.determinism_hash);
    }

    #[test]
    fn csv_round_trips_doubles() {
        let values = [
            0.1,
            std::f64::consts::PI,
            -2.467401100272339e0,
            1.0 / 3.0,
            6.02e23,
        ];
        for v in values {
            let s = format_full(v);
            let back: f64 = s.parse().unwrap();
            assert_eq!(v.to_bits(), back.to_bits(), "{v} -> {s} -> {back}");
        }
    }

    #[test]
    fn csv_has_header_and_lf() {
        let dir = std::env::temp_dir().join(format!("degenlab-csv-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.csv");
        write_csv(
            path.to_str().unwrap(),
            &["eta", "lambda0"],
            &[vec![10.0, 3.3], vec![20.0, 4.4]],
        )
        .unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("eta,lambda0\n"));
        assert_eq!(text.lines().count(), 3);
        assert!(!text.contains('\r'));
        std::fs::remove_dir_all(&dir).ok();
    }
}
