//! Per-timestep experiment metrics, derived summary statistics, and their
//! on-disk formats.
//!
//! The metrics CSV carries one row per environment timestep with header
//! `run,episode,t,state,action,actual,assumed,re_0,...,re_{k-1},reward_a,switch`.
//! All numbers are written with Rust's shortest round-trip formatting, so a
//! given `Metrics` value always serializes to identical bytes.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::policy::PolicyId;
use crate::{Error, Result};

/// One environment timestep as logged by the harness.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run: u32,
    pub episode: u32,
    /// Global timestep within the run; monotone across episode boundaries.
    pub t: u64,
    /// Canonical state key the opponent action was observed in.
    pub state: String,
    /// Opponent action index.
    pub action: u8,
    /// Scheduled opponent policy in force at this timestep.
    pub actual: PolicyId,
    /// Detector's assumed policy after observing this timestep's action.
    pub assumed: PolicyId,
    /// Detector running errors after the update (all zeros for the baseline
    /// agent, which never observes).
    pub running_errors: Vec<f64>,
    pub reward_a: f64,
    /// True when the detector declared a switch on this observation.
    pub switch: bool,
}

/// A full metrics log plus the context needed to interpret it.
#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub rows: Vec<MetricsRow>,
    /// Number of bank policies (width of the `re_*` columns).
    pub policy_count: usize,
    /// Timesteps between scheduled opponent switches; used as the censoring
    /// bound for detection latency.
    pub switch_period: u32,
}

/// Aggregate statistics over one metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Fraction of timesteps where the assumed policy matched the actual one.
    pub aop_accuracy: f64,
    pub mean_episodic_reward: f64,
    /// Population standard deviation over per-episode reward sums.
    pub std_episodic_reward: f64,
    /// Mean timesteps from a scheduled switch to the first matching
    /// assumption; switches never matched before the next switch count as one
    /// full period.
    pub mean_detection_latency: f64,
    pub switches_detected: u64,
    /// Detector switches that landed on a policy other than the actual one.
    pub false_switches: u64,
}

/// Histogram bin edges for episodic rewards: width 10 over [-80, 100].
pub const REWARD_HISTOGRAM_MIN: f64 = -80.0;
pub const REWARD_HISTOGRAM_BIN_WIDTH: f64 = 10.0;
pub const REWARD_HISTOGRAM_BINS: usize = 18;

impl Metrics {
    /// Fraction of rows with `assumed == actual`.
    pub fn aop_accuracy(&self) -> Result<f64> {
        if self.rows.is_empty() {
            return Err(Error::EmptyMetrics);
        }
        let matched = self.rows.iter().filter(|r| r.assumed == r.actual).count();
        Ok(matched as f64 / self.rows.len() as f64)
    }

    /// Per-episode sums of `reward_a`, grouped by (run, episode) in row order.
    pub fn episode_rewards(&self) -> Vec<f64> {
        let mut sums = Vec::new();
        let mut current: Option<(u32, u32)> = None;
        for row in &self.rows {
            let key = (row.run, row.episode);
            if current != Some(key) {
                current = Some(key);
                sums.push(0.0);
            }
            *sums.last_mut().expect("pushed above") += row.reward_a;
        }
        sums
    }

    /// Mean and population standard deviation of episodic accumulated reward.
    pub fn reward_stats(&self) -> Result<(f64, f64)> {
        let episodes = self.episode_rewards();
        if episodes.is_empty() {
            return Err(Error::EmptyMetrics);
        }
        let n = episodes.len() as f64;
        let mean = episodes.iter().sum::<f64>() / n;
        let variance = episodes.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        Ok((mean, variance.sqrt()))
    }

    /// Scheduled switch points per run, derived from changes in the `actual`
    /// column: (row index, timestep, new actual policy).
    fn scheduled_switches(&self) -> Vec<(usize, u64, PolicyId)> {
        let mut switches = Vec::new();
        for (i, pair) in self.rows.windows(2).enumerate() {
            let (prev, next) = (&pair[0], &pair[1]);
            if prev.run == next.run && next.actual != prev.actual {
                switches.push((i + 1, next.t, next.actual));
            }
        }
        switches
    }

    /// Mean detection latency over scheduled switches, censored at one period.
    pub fn detection_latency(&self) -> Result<f64> {
        let switches = self.scheduled_switches();
        if switches.is_empty() {
            return Err(Error::NoSwitches);
        }
        let period = u64::from(self.switch_period);
        let mut total = 0.0;
        for &(row_index, switch_t, new_actual) in &switches {
            let run = self.rows[row_index].run;
            let latency = self.rows[row_index..]
                .iter()
                .take_while(|r| r.run == run && r.t < switch_t + period)
                .find(|r| r.assumed == new_actual)
                .map(|r| (r.t - switch_t) as f64)
                .unwrap_or(period as f64);
            total += latency;
        }
        Ok(total / switches.len() as f64)
    }

    /// Rolls the log up into a [`Summary`].
    pub fn summarize(&self) -> Result<Summary> {
        let (mean_episodic_reward, std_episodic_reward) = self.reward_stats()?;
        let mean_detection_latency = match self.detection_latency() {
            Ok(latency) => latency,
            Err(Error::NoSwitches) => 0.0,
            Err(e) => return Err(e),
        };
        let switches_detected = self.rows.iter().filter(|r| r.switch).count() as u64;
        let false_switches = self
            .rows
            .iter()
            .filter(|r| r.switch && r.assumed != r.actual)
            .count() as u64;
        Ok(Summary {
            aop_accuracy: self.aop_accuracy()?,
            mean_episodic_reward,
            std_episodic_reward,
            mean_detection_latency,
            switches_detected,
            false_switches,
        })
    }

    /// Serializes the log to the metrics CSV format.
    pub fn to_csv_string(&self) -> Result<String> {
        let mut writer = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = ["run", "episode", "t", "state", "action", "actual", "assumed"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        for i in 0..self.policy_count {
            header.push(format!("re_{i}"));
        }
        header.push("reward_a".to_string());
        header.push("switch".to_string());
        writer.write_record(&header)?;
        for row in &self.rows {
            let mut record: Vec<String> = vec![
                row.run.to_string(),
                row.episode.to_string(),
                row.t.to_string(),
                row.state.clone(),
                row.action.to_string(),
                row.actual.to_string(),
                row.assumed.to_string(),
            ];
            for err in &row.running_errors {
                record.push(format!("{err}"));
            }
            record.push(format!("{}", row.reward_a));
            record.push(if row.switch { "1" } else { "0" }.to_string());
            writer.write_record(&record)?;
        }
        let bytes = writer.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    /// Parses a metrics CSV produced by [`Metrics::to_csv_string`].
    ///
    /// The switch period is not stored in the file; it is inferred as the
    /// smallest gap between consecutive actual-policy changes (falling back
    /// to the log length when fewer than two changes exist).
    pub fn from_csv_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut csv_reader = csv::Reader::from_reader(reader);
        let headers = csv_reader.headers()?.clone();
        let policy_count = headers.iter().filter(|h| h.starts_with("re_")).count();
        let expected_len = 9 + policy_count;
        let mut rows = Vec::new();
        for record in csv_reader.records() {
            let record = record?;
            if record.len() != expected_len {
                return Err(Error::InvalidConfig(format!(
                    "metrics row has {} fields, expected {expected_len}",
                    record.len()
                )));
            }
            let field = |i: usize| record.get(i).expect("length checked");
            let parse_err =
                |what: &str| Error::InvalidConfig(format!("metrics row has invalid {what}"));
            let mut running_errors = Vec::with_capacity(policy_count);
            for i in 0..policy_count {
                running_errors.push(
                    field(7 + i)
                        .parse::<f64>()
                        .map_err(|_| parse_err("running error"))?,
                );
            }
            rows.push(MetricsRow {
                run: field(0).parse().map_err(|_| parse_err("run"))?,
                episode: field(1).parse().map_err(|_| parse_err("episode"))?,
                t: field(2).parse().map_err(|_| parse_err("t"))?,
                state: field(3).to_string(),
                action: field(4).parse().map_err(|_| parse_err("action"))?,
                actual: PolicyId(field(5).parse().map_err(|_| parse_err("actual"))?),
                assumed: PolicyId(field(6).parse().map_err(|_| parse_err("assumed"))?),
                running_errors,
                reward_a: field(7 + policy_count)
                    .parse()
                    .map_err(|_| parse_err("reward_a"))?,
                switch: match field(8 + policy_count) {
                    "0" => false,
                    "1" => true,
                    _ => return Err(parse_err("switch flag")),
                },
            });
        }
        let mut metrics = Metrics {
            rows,
            policy_count,
            switch_period: 0,
        };
        metrics.switch_period = metrics.infer_switch_period();
        Ok(metrics)
    }

    fn infer_switch_period(&self) -> u32 {
        let switches = self.scheduled_switches();
        let mut min_gap: Option<u64> = None;
        for pair in switches.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if self.rows[a.0].run == self.rows[b.0].run {
                let gap = b.1 - a.1;
                min_gap = Some(min_gap.map_or(gap, |g| g.min(gap)));
            }
        }
        match min_gap {
            Some(gap) => gap as u32,
            None => self
                .rows
                .iter()
                .map(|r| r.t + 1)
                .max()
                .unwrap_or(1)
                .try_into()
                .unwrap_or(u32::MAX),
        }
    }
}

/// Bins episodic rewards into [`REWARD_HISTOGRAM_BINS`] counts of width 10
/// starting at -80; out-of-range values land in the edge bins, so counts
/// always sum to the episode count.
pub fn reward_histogram(episode_rewards: &[f64]) -> [u64; REWARD_HISTOGRAM_BINS] {
    let mut bins = [0u64; REWARD_HISTOGRAM_BINS];
    for &reward in episode_rewards {
        let offset = (reward - REWARD_HISTOGRAM_MIN) / REWARD_HISTOGRAM_BIN_WIDTH;
        let index = (offset.floor() as i64).clamp(0, REWARD_HISTOGRAM_BINS as i64 - 1);
        bins[index as usize] += 1;
    }
    bins
}

/// Summary JSON document: the summary fields plus the config echoed for
/// provenance.
pub fn summary_json<C: Serialize>(summary: &Summary, config: &C) -> Result<String> {
    #[derive(Serialize)]
    struct Document<'a, C> {
        aop_accuracy: f64,
        mean_episodic_reward: f64,
        std_episodic_reward: f64,
        mean_detection_latency: f64,
        switches_detected: u64,
        false_switches: u64,
        config: &'a C,
    }
    let doc = Document {
        aop_accuracy: summary.aop_accuracy,
        mean_episodic_reward: summary.mean_episodic_reward,
        std_episodic_reward: summary.std_episodic_reward,
        mean_detection_latency: summary.mean_detection_latency,
        switches_detected: summary.switches_detected,
        false_switches: summary.false_switches,
        config,
    };
    let mut out = serde_json::to_string_pretty(&doc)?;
    out.push('\n');
    Ok(out)
}

/// Writes a string to `path` through a sibling temp file and an atomic
/// rename, so failures never leave partial output behind.
pub fn write_atomically(path: &std::path::Path, contents: &str) -> Result<()> {
    let parent = path.parent().unwrap_or_else(|| std::path::Path::new("."));
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::InvalidConfig(format!("not a file path: {}", path.display())))?;
    let mut tmp = parent.join(file_name);
    tmp.set_extension("tmp");
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(contents.as_bytes())?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
