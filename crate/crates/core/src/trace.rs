//! Trace files: recorded observation streams for offline replay.
//!
//! JSON Lines, one object per observed timestep:
//! `{"t": int, "state": "<state_key>", "action": int, "actual": int|null}`.
//! Replaying a trace through a detector applies exactly the same update rule
//! as the live pipeline, so a trace recorded by a simulation reproduces the
//! simulation's assumed-policy sequence.

use serde::{Deserialize, Serialize};

use crate::detector::Detector;
use crate::metrics::{Metrics, MetricsRow};
use crate::policy::{ObservedAction, PolicyId};
use crate::{Error, Result};

/// One observed timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: u64,
    pub state: String,
    pub action: usize,
    /// Ground-truth opponent policy, when the recorder knew it.
    pub actual: Option<PolicyId>,
}

/// Serializes rows to JSON Lines.
pub fn to_jsonl(rows: &[TraceRow]) -> Result<String> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses a JSON Lines trace; blank lines are ignored. Errors carry the
/// 1-based line number of the offending row.
pub fn from_jsonl(text: &str) -> Result<Vec<TraceRow>> {
    let mut rows = Vec::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: TraceRow =
            serde_json::from_str(line).map_err(|e| Error::MalformedTraceLine {
                line: index + 1,
                reason: e.to_string(),
            })?;
        rows.push(row);
    }
    Ok(rows)
}

/// Projects a metrics log from one run into trace rows.
pub fn from_metrics_rows<'a, I: IntoIterator<Item = &'a MetricsRow>>(rows: I) -> Vec<TraceRow> {
    rows.into_iter()
        .map(|row| TraceRow {
            t: row.t,
            state: row.state.clone(),
            action: usize::from(row.action),
            actual: Some(row.actual),
        })
        .collect()
}

/// Replays a trace through a detector and logs one metrics row per input row.
///
/// Rewards are not part of a trace, so `reward_a` is zero throughout; the
/// `actual` column falls back to the assumed policy when the trace carries no
/// ground truth (keeping the metrics shape intact without inventing data —
/// accuracy over such rows is meaningless and callers should skip it).
pub fn replay(detector: &mut Detector, rows: &[TraceRow]) -> Result<Metrics> {
    let policy_count = detector.bank().len();
    let mut out_rows = Vec::with_capacity(rows.len());
    for row in rows {
        let update = detector.observe(&row.state, ObservedAction(row.action))?;
        out_rows.push(MetricsRow {
            run: 0,
            episode: 0,
            t: row.t,
            state: row.state.clone(),
            action: row.action as u8,
            actual: row.actual.unwrap_or(update.assumed_after),
            assumed: update.assumed_after,
            running_errors: detector.running_errors().to_vec(),
            reward_a: 0.0,
            switch: update.switched.is_some(),
        });
    }
    let mut metrics = Metrics {
        rows: out_rows,
        policy_count,
        switch_period: 0,
    };
    metrics.switch_period = metrics
        .rows
        .iter()
        .map(|r| r.t + 1)
        .max()
        .unwrap_or(1)
        .try_into()
        .unwrap_or(u32::MAX);
    Ok(metrics)
}

/// Fraction of trace-backed rows whose assumption matched the recorded
/// ground truth; `None` when the trace carried no ground truth at all.
pub fn replay_accuracy(trace: &[TraceRow], replayed: &Metrics) -> Option<f64> {
    let mut total = 0usize;
    let mut matched = 0usize;
    for (trace_row, metrics_row) in trace.iter().zip(&replayed.rows) {
        if let Some(actual) = trace_row.actual {
            total += 1;
            if metrics_row.assumed == actual {
                matched += 1;
            }
        }
    }
    (total > 0).then(|| matched as f64 / total as f64)
}
