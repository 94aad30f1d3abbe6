//! On-disk artifacts: curve and aggregate CSVs, policy files, run logs.
//!
//! Floats are written with Rust's shortest round-trip formatting, so every
//! value parses back to the identical f64.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dp::JointPolicy;
use crate::error::{Error, Result};
use crate::game::write_atomic;
use crate::learn::{EvalRecord, RunLog};
use crate::metrics::mean_std;

pub const CURVE_COLUMNS: [&str; 6] = ["env_steps", "learn_steps", "mean_return", "std_return", "nash_gap", "sup_q_error"];
pub const AGGREGATE_COLUMNS: [&str; 7] = [
    "group",
    "env_steps",
    "learn_steps",
    "mean_return",
    "std_return",
    "nash_gap",
    "n_seeds",
];
pub const POLICY_FORMAT_VERSION: u32 = 1;

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for row in rows {
        w.write_record(&row).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

/// Max over agents of the recorded `‖Q − Q*‖∞`, if any.
fn sup_error(rec: &EvalRecord) -> Option<f64> {
    rec.sup_q_error
        .as_ref()
        .and_then(|v| v.iter().flatten().copied().reduce(f64::max))
}

pub fn curve_csv(log: &RunLog) -> Vec<u8> {
    csv_bytes(
        &CURVE_COLUMNS,
        log.records.iter().map(|r| {
            vec![
                r.env_steps.to_string(),
                r.learn_steps.to_string(),
                r.mean_return.to_string(),
                r.std_return.to_string(),
                opt(r.nash_gap),
                opt(sup_error(r)),
            ]
        }),
    )
}

/// Single-row CSV for OPTIMAL: the curve columns plus a summary of V*.
pub fn optimal_csv(log: &RunLog, values: &[f64], init_value: f64) -> Vec<u8> {
    let rec = &log.records[0];
    let (vmean, _) = mean_std(values);
    let vmin = values.iter().copied().fold(f64::INFINITY, f64::min);
    let vmax = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut header = CURVE_COLUMNS.to_vec();
    header.extend(["value_min", "value_mean", "value_max", "value_init"]);
    csv_bytes(
        &header,
        [vec![
            rec.env_steps.to_string(),
            rec.learn_steps.to_string(),
            rec.mean_return.to_string(),
            rec.std_return.to_string(),
            String::new(),
            String::new(),
            vmin.to_string(),
            vmean.to_string(),
            vmax.to_string(),
            init_value.to_string(),
        ]],
    )
}

/// Latest record at or before `step`.
fn floor_record(records: &[EvalRecord], step: u64) -> Option<&EvalRecord> {
    records.iter().take_while(|r| r.env_steps <= step).last()
}

/// Per-step mean and std across seeds for one group. Runs are aligned on the
/// union of their evaluation steps; a run contributes its latest record at or
/// before each step.
pub fn aggregate_rows(group: &str, logs: &[&RunLog]) -> Vec<Vec<String>> {
    let steps: BTreeSet<u64> = logs.iter().flat_map(|l| l.records.iter().map(|r| r.env_steps)).collect();
    steps
        .into_iter()
        .map(|step| {
            let recs: Vec<&EvalRecord> = logs.iter().filter_map(|l| floor_record(&l.records, step)).collect();
            let returns: Vec<f64> = recs.iter().map(|r| r.mean_return).collect();
            let learn: Vec<f64> = recs.iter().map(|r| r.learn_steps as f64).collect();
            let gaps: Vec<f64> = recs.iter().filter_map(|r| r.nash_gap).collect();
            let (m, s) = mean_std(&returns);
            let gap = (!gaps.is_empty()).then(|| mean_std(&gaps).0);
            vec![
                group.to_string(),
                step.to_string(),
                mean_std(&learn).0.to_string(),
                m.to_string(),
                s.to_string(),
                opt(gap),
                recs.len().to_string(),
            ]
        })
        .collect()
}

pub fn aggregate_csv(rows: Vec<Vec<String>>) -> Vec<u8> {
    csv_bytes(&AGGREGATE_COLUMNS, rows)
}

/// One aggregate row read back for comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatePoint {
    pub group: String,
    pub env_steps: u64,
    pub mean: f64,
    pub std: f64,
}

pub fn read_aggregate(path: &Path) -> Result<Vec<AggregatePoint>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != AGGREGATE_COLUMNS {
        return Err(Error::format(path.display().to_string(), "unexpected aggregate columns"));
    }
    let mut points = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let loc = || format!("{} row {}", path.display(), line + 2);
        let num = |k: usize| -> Result<f64> { rec[k].parse::<f64>().map_err(|e| Error::format(loc(), e.to_string())) };
        points.push(AggregatePoint {
            group: rec[0].to_string(),
            env_steps: rec[1].parse().map_err(|e: std::num::ParseIntError| Error::format(loc(), e.to_string()))?,
            mean: num(3)?,
            std: num(4)?,
        });
    }
    Ok(points)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::format(path.display().to_string(), e.to_string())
    }
}

/// Self-describing policy file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub format_version: u32,
    #[serde(flatten)]
    pub policy: JointPolicy,
}

pub fn policy_json(policy: &JointPolicy) -> Vec<u8> {
    let file = PolicyFile {
        format_version: POLICY_FORMAT_VERSION,
        policy: policy.clone(),
    };
    serde_json::to_vec_pretty(&file).expect("policy serializes")
}

pub fn save_policy(policy: &JointPolicy, path: &Path) -> Result<()> {
    write_atomic(path, &policy_json(policy))
}

/// Reads a policy file, or the `final_policy` of a run log.
pub fn load_policy(path: &Path) -> Result<JointPolicy> {
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value =
        serde_json::from_slice(&text).map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    if value.get("final_policy").is_some() {
        let log: RunLog = serde_json::from_value(value)
            .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
        return Ok(log.final_policy);
    }
    let file: PolicyFile =
        serde_json::from_value(value).map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    if file.format_version != POLICY_FORMAT_VERSION {
        return Err(Error::format(
            path.display().to_string(),
            format!("policy format_version {} unsupported", file.format_version),
        ));
    }
    Ok(file.policy)
}

pub fn runlog_json(log: &RunLog) -> Vec<u8> {
    serde_json::to_vec_pretty(log).expect("run log serializes")
}

pub fn load_runlog(path: &Path) -> Result<RunLog> {
    let text = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_slice(&text).map_err(|e| Error::format(path.display().to_string(), e.to_string()))
}
