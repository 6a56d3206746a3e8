//! CSV rows and the JSON run summary.

use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{serialize_config, ExperimentConfig};
use crate::experiments::{ExperimentOutput, Row};
use crate::Result;

pub const COLUMNS: [&str; 10] = [
    "config_hash",
    "experiment",
    "epsilon",
    "n",
    "delta",
    "t",
    "observable",
    "value",
    "residual_norm",
    "runtime_ms",
];

/// SHA-256 of the canonical serialization, so comments and layout do not matter.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(serialize_config(cfg).as_bytes()))
}

/// Shortest round-tripping decimal form; always has a `.` or an exponent.
pub fn format_f64(x: f64) -> String {
    format!("{x:?}")
}

fn opt(x: Option<f64>) -> String {
    x.map(format_f64).unwrap_or_default()
}

pub fn write_csv<W: Write>(out: W, hash: &str, rows: &[Row]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for r in rows {
        w.write_record([
            hash.to_string(),
            r.experiment.name().to_string(),
            opt(r.epsilon),
            r.n.map(|n| n.to_string()).unwrap_or_default(),
            opt(r.delta),
            opt(r.t),
            r.observable.clone(),
            format_f64(r.value),
            opt(r.residual_norm),
            opt(r.runtime_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Non-finite numbers become strings, since JSON has no NaN.
fn num(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(format_f64(x))
    }
}

fn environment(threads: usize) -> Value {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    json!({
        "version": env!("CARGO_PKG_VERSION"),
        "os": std::env::consts::OS,
        "arch": std::env::consts::ARCH,
        "threads": threads,
        "unix_time": stamp,
    })
}

pub struct Summary<'a> {
    pub hash: &'a str,
    pub seed: u64,
    pub threads: usize,
    pub outputs: &'a [ExperimentOutput],
    pub artifacts: &'a [String],
    /// Free-form facts about the model, e.g. the spectral gap.
    pub model: Value,
}

impl Summary<'_> {
    pub fn to_json(&self) -> Value {
        let experiments: Vec<Value> = self
            .outputs
            .iter()
            .map(|o| {
                let fits: Vec<Value> = o
                    .fits
                    .iter()
                    .map(|f| {
                        json!({
                            "name": f.name,
                            "points": f.points.iter().map(|p| vec![num(p.0), num(p.1)]).collect::<Vec<_>>(),
                            "slope": num(f.fit.slope),
                            "intercept": num(f.fit.intercept),
                            "r_squared": num(f.fit.r_squared),
                            "slope_stderr": num(f.fit.slope_stderr),
                            "slope_ci": [num(f.fit.slope_ci.0), num(f.fit.slope_ci.1)],
                            "residuals": f.fit.residuals.iter().map(|&r| num(r)).collect::<Vec<_>>(),
                        })
                    })
                    .collect();
                let criteria: Vec<Value> = o
                    .criteria
                    .iter()
                    .map(|c| json!({"id": c.id, "passed": c.passed, "detail": c.detail}))
                    .collect();
                json!({"id": o.id.name(), "fits": fits, "criteria": criteria})
            })
            .collect();
        json!({
            "config_hash": self.hash,
            "seed": self.seed,
            "passed": self.outputs.iter().all(|o| o.criteria.iter().all(|c| c.passed)),
            "artifacts": self.artifacts,
            "experiments": experiments,
            "model": self.model,
            "environment": environment(self.threads),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(&self.to_json())?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentId;

    #[test]
    fn floats_round_trip_and_missing_fields_are_empty() {
        let row = Row {
            experiment: ExperimentId::E1,
            epsilon: Some(0.1),
            n: Some(2),
            delta: None,
            t: None,
            observable: "a,b".into(),
            value: 1e-17,
            residual_norm: Some(3.0),
            runtime_ms: None,
        };
        let mut buf = vec![];
        write_csv(&mut buf, "abc", &[row]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], COLUMNS.join(","));
        assert_eq!(lines[1], "abc,E1,0.1,2,,,\"a,b\",1e-17,3.0,");
        assert_eq!(format_f64(0.1 + 0.2).parse::<f64>().unwrap(), 0.1 + 0.2);
    }
}
