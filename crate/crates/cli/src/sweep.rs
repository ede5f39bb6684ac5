//! One-axis parameter sweeps and threshold bisection.

use std::path::PathBuf;

use heatlab::diagnostics::Verdict;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::run::{run_experiment, simulate, write_atomic, Summary};
use crate::CliError;

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_HEADER: &str = "key,value,status,verdict,t_detect,rate_stat,margin,E0,J0,membership,error";

/// A key and the values it takes, as TOML literals.
#[derive(Debug, Clone, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<toml::Value>,
}

impl Axis {
    /// Parses `key=v1,v2,...`. Each value is read as a TOML literal and falls
    /// back to a string, so `lambda=0.5,1.5` and `scheme=etdrk2` both work.
    pub fn parse(spec: &str) -> Result<Self, CliError> {
        let (key, values) = spec
            .split_once('=')
            .ok_or_else(|| CliError::Config { key: spec.to_string(), message: "axis must look like key=v1,v2".into() })?;
        let key = key.trim().to_string();
        let values = values
            .split(',')
            .map(str::trim)
            .filter(|v| !v.is_empty())
            .map(|v| {
                toml::from_str::<toml::Table>(&format!("x = {v}"))
                    .ok()
                    .and_then(|mut t| t.remove("x"))
                    .unwrap_or_else(|| toml::Value::String(v.to_string()))
            })
            .collect();
        Ok(Self { key, values })
    }

    pub fn label(value: &toml::Value) -> String {
        match value {
            toml::Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: String,
    pub summary: Option<Summary>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn verdict(&self) -> Option<&Verdict> {
        self.summary.as_ref().map(|s| &s.verdict)
    }
}

/// Runs the template once per axis value in parallel, each into
/// `out_dir/<key>=<value>`, and writes `out_dir/sweep.csv`. Failed runs keep
/// their row with the error message.
pub fn sweep(template: &ExperimentConfig, axis: &Axis) -> Result<Vec<SweepRow>, CliError> {
    let rows: Vec<SweepRow> = axis
        .values
        .par_iter()
        .map(|value| {
            let label = Axis::label(value);
            let result = template.with_key(&axis.key, value).and_then(|mut cfg| {
                cfg.out_dir = run_dir(&template.out_dir, &axis.key, &label);
                run_experiment(&cfg)
            });
            match result {
                Ok(summary) => SweepRow { value: label, summary: Some(summary), error: None },
                Err(e) => SweepRow { value: label, summary: None, error: Some(e.to_string()) },
            }
        })
        .collect();
    write_atomic(&template.out_dir, SWEEP_FILE, aggregate_csv(&axis.key, &rows).as_bytes())?;
    Ok(rows)
}

fn run_dir(base: &std::path::Path, key: &str, label: &str) -> PathBuf {
    let safe: String = label.chars().map(|c| if c.is_ascii_alphanumeric() || ".-_".contains(c) { c } else { '_' }).collect();
    base.join(format!("{key}={safe}"))
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn aggregate_csv(key: &str, rows: &[SweepRow]) -> String {
    let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
    let mut out = format!("{SWEEP_HEADER}\n");
    for r in rows {
        let line = match (&r.summary, &r.error) {
            (Some(s), _) => format!(
                "{},{},ok,{},{},{},{},{},{},{},",
                csv_field(key),
                csv_field(&r.value),
                s.verdict.label(),
                opt(s.t_detect),
                opt(s.rate_stat),
                opt(s.concavity.as_ref().map(|c| c.margin)),
                s.initial.energy,
                s.initial.nehari,
                serde_json::to_value(s.initial.membership).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            ),
            (None, e) => format!(
                "{},{},failed,,,,,,,,{}",
                csv_field(key),
                csv_field(&r.value),
                csv_field(e.as_deref().unwrap_or("unknown error"))
            ),
        };
        out.push_str(&line);
        out.push('\n');
    }
    out
}

/// Bisects a numeric key on `[lo, hi]` for the boundary between runs that
/// dissipate (at `lo`) and runs that blow up (at `hi`). Runs are in memory.
/// Returns the final bracket.
pub fn bisect_threshold(
    template: &ExperimentConfig,
    key: &str,
    mut lo: f64,
    mut hi: f64,
    iterations: usize,
) -> Result<(f64, f64), CliError> {
    let blows_up = |x: f64| -> Result<bool, CliError> {
        let cfg = template.with_key(key, &toml::Value::Float(x))?;
        Ok(matches!(simulate(&cfg)?.summary.verdict, Verdict::BlowsUp { .. }))
    };
    if blows_up(lo)? || !blows_up(hi)? {
        return Err(CliError::Config {
            key: key.to_string(),
            message: format!("[{lo}, {hi}] does not bracket the dissipation/blow-up boundary"),
        });
    }
    for _ in 0..iterations {
        let mid = 0.5 * (lo + hi);
        if blows_up(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}
