//! One-parameter sweeps over a scenario.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::config::load_with_overrides;
use crate::sim::{run_scenario, SimError};

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("sweep axis `{0}` has no values")]
    EmptyAxis(String),
    #[error("bad axis value list `{0}`")]
    BadValues(String),
    #[error("axis `{path}` = {value}: {message}")]
    Config { path: String, value: String, message: String },
    #[error("axis value {value}: {source}")]
    Sim { value: String, source: SimError },
}

/// A dotted config path and the values it takes.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepAxis {
    pub path: String,
    pub values: Vec<toml::Value>,
}

impl SweepAxis {
    /// Parses `a..b:step` (inclusive) or a comma-separated list of TOML values.
    pub fn parse(path: &str, text: &str) -> Result<Self, SweepError> {
        let text = text.trim();
        let values = if let Some((range, step)) = text.split_once(':').filter(|(r, _)| r.contains("..")) {
            let (a, b) = range.split_once("..").expect("checked");
            let parse = |s: &str| s.trim().parse::<i64>().map_err(|_| SweepError::BadValues(text.into()));
            let (a, b, step) = (parse(a)?, parse(b)?, parse(step)?);
            if step <= 0 {
                return Err(SweepError::BadValues(text.into()));
            }
            (a..=b).step_by(step as usize).map(toml::Value::Integer).collect()
        } else {
            text.split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| {
                    toml::from_str::<toml::Table>(&format!("v = {s}"))
                        .ok()
                        .and_then(|mut t| t.remove("v"))
                        .unwrap_or_else(|| toml::Value::String(s.into()))
                })
                .collect()
        };
        Ok(SweepAxis { path: path.into(), values })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub instances_created: usize,
    pub rtt_mean_ms: f64,
    pub dp_loss_mean_pct: f64,
    pub dp_loss_p99_pct: f64,
    pub cp_completion_p95_ms: f64,
}

/// Runs the scenario in `base` once per axis value, in parallel. Rows come
/// back in axis order whatever order the runs finish in.
pub fn sweep(
    base: &str,
    axis: &SweepAxis,
    overrides: &[(String, toml::Value)],
    seed: Option<u64>,
) -> Result<Vec<SweepRow>, SweepError> {
    if axis.values.is_empty() {
        return Err(SweepError::EmptyAxis(axis.path.clone()));
    }
    let mut configs = Vec::with_capacity(axis.values.len());
    for v in &axis.values {
        let mut edits = overrides.to_vec();
        edits.push((axis.path.clone(), v.clone()));
        let cfg = load_with_overrides(base, &edits).map_err(|message| SweepError::Config {
            path: axis.path.clone(),
            value: v.to_string(),
            message,
        })?;
        configs.push((v.to_string(), cfg));
    }
    let results: Vec<_> = std::thread::scope(|s| {
        let handles: Vec<_> = configs
            .iter()
            .map(|(value, cfg)| {
                s.spawn(move || {
                    run_scenario(cfg, seed.unwrap_or(cfg.seed))
                        .map(|r| SweepRow {
                            value: value.clone(),
                            instances_created: r.summary.instances_created,
                            rtt_mean_ms: r.summary.rtt_mean_ms,
                            dp_loss_mean_pct: r.summary.dp_loss_mean_pct,
                            dp_loss_p99_pct: r.summary.dp_loss_p99_pct,
                            cp_completion_p95_ms: r.summary.cp_completion_p95_ms,
                        })
                        .map_err(|source| SweepError::Sim { value: value.clone(), source })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });
    results.into_iter().collect()
}

/// Plain-text table, one row per axis value.
pub fn format_table(path: &str, rows: &[SweepRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<16} {:>9} {:>12} {:>12} {:>12} {:>12}",
        path.rsplit('.').next().unwrap_or(path),
        "created",
        "rtt_mean_ms",
        "loss_mean_%",
        "loss_p99_%",
        "cp_p95_ms"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<16} {:>9} {:>12.2} {:>12.3} {:>12.3} {:>12.2}",
            r.value, r.instances_created, r.rtt_mean_ms, r.dp_loss_mean_pct, r.dp_loss_p99_pct, r.cp_completion_p95_ms
        );
    }
    out
}
