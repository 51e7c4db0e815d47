//! Subcommand implementations.
//!
//! Config/input problems map to exit code 2, output I/O problems to 3. All
//! outputs for a command are built in memory first and written through
//! temp-file-plus-rename, so a failure never leaves partial files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use opsdemo_core::detector::{Detector, DetectorConfig, InitialAssumed};
use opsdemo_core::experiment::{run_experiment, sweep_alpha, ExperimentConfig};
use opsdemo_core::metrics::{
    reward_histogram, summary_json, write_atomically, Metrics, Summary, REWARD_HISTOGRAM_BINS,
    REWARD_HISTOGRAM_BIN_WIDTH, REWARD_HISTOGRAM_MIN,
};
use opsdemo_core::policy::{PolicyBank, PolicyId, ResponseBank};
use opsdemo_core::trace::{from_jsonl, from_metrics_rows, replay, replay_accuracy, to_jsonl};
use opsdemo_core::{Error, Policy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::{CliError, CliResult};

fn load_config(path: &Path, seed: Option<u64>) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut config = ExperimentConfig::from_json(&text)
        .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?;
    if let Some(seed) = seed {
        config.base_seed = seed;
    }
    Ok(config)
}

fn prepare_out_dir(out: &Path) -> CliResult<()> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::io(format!("cannot create {}: {e}", out.display())))
}

fn write_output(path: &Path, contents: &str) -> CliResult<()> {
    write_atomically(path, contents)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

/// `simulate`: run the configured experiment, write metrics.csv,
/// summary.json, and a run-0 trace.jsonl.
pub fn simulate(config_path: &Path, out: &Path, seed: Option<u64>) -> CliResult<()> {
    let config = load_config(config_path, seed)?;
    let (metrics, summary) = run_experiment(&config)
        .map_err(|e| CliError::usage(format!("experiment failed: {e}")))?;

    let csv = metrics
        .to_csv_string()
        .map_err(|e| CliError::io(format!("cannot serialize metrics: {e}")))?;
    let summary_doc = summary_json(&summary, &config)
        .map_err(|e| CliError::io(format!("cannot serialize summary: {e}")))?;
    // The trace format carries no run column, so the trace covers run 0.
    let trace_rows = from_metrics_rows(metrics.rows.iter().filter(|r| r.run == 0));
    let trace_doc = to_jsonl(&trace_rows)
        .map_err(|e| CliError::io(format!("cannot serialize trace: {e}")))?;

    prepare_out_dir(out)?;
    write_output(&out.join("metrics.csv"), &csv)?;
    write_output(&out.join("summary.json"), &summary_doc)?;
    write_output(&out.join("trace.jsonl"), &trace_doc)?;
    println!(
        "simulate: {} runs, {} rows, accuracy {:.4}, mean episodic reward {:.4}",
        config.runs,
        metrics.rows.len(),
        summary.aop_accuracy,
        summary.mean_episodic_reward
    );
    Ok(())
}

/// `sweep`: one experiment per strictness factor plus a combined table.
pub fn sweep(config_path: &Path, out: &Path, alphas: &[f64], seed: Option<u64>) -> CliResult<()> {
    let config = load_config(config_path, seed)?;
    let table = sweep_alpha(&config, alphas)
        .map_err(|e| CliError::usage(format!("sweep failed: {e}")))?;

    let mut combined = String::from(
        "alpha,aop_accuracy,mean_episodic_reward,std_episodic_reward,\
         mean_detection_latency,switches_detected,false_switches\n",
    );
    let mut summaries = Vec::new();
    for (alpha, summary) in &table {
        writeln!(
            combined,
            "{alpha},{},{},{},{},{},{}",
            summary.aop_accuracy,
            summary.mean_episodic_reward,
            summary.std_episodic_reward,
            summary.mean_detection_latency,
            summary.switches_detected,
            summary.false_switches
        )
        .expect("writing to a String cannot fail");
        let mut swept = config.clone();
        swept.detector.alpha = *alpha;
        let doc = summary_json(summary, &swept)
            .map_err(|e| CliError::io(format!("cannot serialize summary: {e}")))?;
        summaries.push((format!("summary_alpha_{alpha}.json"), doc));
    }

    prepare_out_dir(out)?;
    for (name, doc) in &summaries {
        write_output(&out.join(name), doc)?;
    }
    write_output(&out.join("sweep.csv"), &combined)?;
    for (alpha, summary) in &table {
        println!(
            "alpha {alpha}: accuracy {:.4}, latency {:.2}, switches {}",
            summary.aop_accuracy, summary.mean_detection_latency, summary.switches_detected
        );
    }
    Ok(())
}

/// `trace`: replay a recorded observation stream through a fresh detector.
pub fn trace(
    bank_path: &Path,
    trace_path: &Path,
    alpha: f64,
    threshold: f64,
    out: &Path,
) -> CliResult<()> {
    let bank_text = std::fs::read_to_string(bank_path)
        .map_err(|e| CliError::usage(format!("cannot read bank {}: {e}", bank_path.display())))?;
    let bank = PolicyBank::from_json(&bank_text)
        .map_err(|e| CliError::usage(format!("invalid bank {}: {e}", bank_path.display())))?;
    let trace_text = std::fs::read_to_string(trace_path).map_err(|e| {
        CliError::usage(format!("cannot read trace {}: {e}", trace_path.display()))
    })?;
    let rows = from_jsonl(&trace_text).map_err(|e| match e {
        Error::MalformedTraceLine { .. } => CliError::usage(e.to_string()),
        other => CliError::usage(format!("invalid trace: {other}")),
    })?;

    // Replay never responds, so placeholder uniform responses suffice.
    let responses = ResponseBank::new(vec![
        Policy::Uniform {
            n: bank.action_count()
        };
        bank.len()
    ])
    .map_err(|e| CliError::usage(format!("cannot build responses: {e}")))?;
    let config = DetectorConfig {
        alpha,
        threshold,
        initial_assumed: InitialAssumed::Policy(PolicyId(0)),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut detector = Detector::new(bank.clone(), responses, config, &mut rng)
        .map_err(|e| CliError::usage(format!("cannot build detector: {e}")))?;
    let replayed = replay(&mut detector, &rows)
        .map_err(|e| CliError::usage(format!("replay failed: {e}")))?;
    let accuracy = replay_accuracy(&rows, &replayed);

    let mut csv = String::from("t,state,action,actual,assumed");
    for i in 0..bank.len() {
        write!(csv, ",re_{i}").expect("writing to a String cannot fail");
    }
    csv.push_str(",switch\n");
    for (trace_row, metrics_row) in rows.iter().zip(&replayed.rows) {
        let actual = trace_row
            .actual
            .map(|id| id.to_string())
            .unwrap_or_default();
        write!(
            csv,
            "{},\"{}\",{},{actual},{}",
            metrics_row.t, metrics_row.state, metrics_row.action, metrics_row.assumed
        )
        .expect("writing to a String cannot fail");
        for err in &metrics_row.running_errors {
            write!(csv, ",{err}").expect("writing to a String cannot fail");
        }
        writeln!(csv, ",{}", u8::from(metrics_row.switch))
            .expect("writing to a String cannot fail");
    }

    #[derive(serde::Serialize)]
    struct ReplaySummary {
        rows: usize,
        switches: u64,
        aop_accuracy: Option<f64>,
        alpha: f64,
        threshold: f64,
    }
    let switches = replayed.rows.iter().filter(|r| r.switch).count() as u64;
    let summary = serde_json::to_string_pretty(&ReplaySummary {
        rows: replayed.rows.len(),
        switches,
        aop_accuracy: accuracy,
        alpha,
        threshold,
    })
    .map_err(|e| CliError::io(format!("cannot serialize summary: {e}")))?;

    prepare_out_dir(out)?;
    write_output(&out.join("replay.csv"), &csv)?;
    write_output(&out.join("replay_summary.json"), &format!("{summary}\n"))?;
    println!(
        "trace: {} rows, {switches} switches{}",
        replayed.rows.len(),
        accuracy
            .map(|a| format!(", accuracy {a:.4}"))
            .unwrap_or_default()
    );
    Ok(())
}

struct FileReport {
    name: String,
    episodes: usize,
    summary: Summary,
    histogram: [u64; REWARD_HISTOGRAM_BINS],
}

/// `report`: aggregate one or more metrics files into a comparison table.
pub fn report(metrics_paths: &[PathBuf], out: Option<&Path>) -> CliResult<()> {
    let mut reports = Vec::new();
    for path in metrics_paths {
        let file = std::fs::File::open(path)
            .map_err(|e| CliError::io(format!("cannot read {}: {e}", path.display())))?;
        let metrics = Metrics::from_csv_reader(file)
            .map_err(|e| CliError::usage(format!("invalid metrics {}: {e}", path.display())))?;
        if metrics.rows.is_empty() {
            return Err(CliError::usage(format!(
                "metrics file {} contains no rows",
                path.display()
            )));
        }
        let summary = metrics
            .summarize()
            .map_err(|e| CliError::usage(format!("cannot summarize {}: {e}", path.display())))?;
        let episode_rewards = metrics.episode_rewards();
        reports.push(FileReport {
            name: path.display().to_string(),
            episodes: episode_rewards.len(),
            summary,
            histogram: reward_histogram(&episode_rewards),
        });
    }

    println!(
        "{:<30} {:>9} {:>12} {:>11} {:>9} {:>9} {:>9} {:>7}",
        "file", "episodes", "reward_mean", "reward_std", "accuracy", "latency", "switches", "false"
    );
    for r in &reports {
        println!(
            "{:<30} {:>9} {:>12.4} {:>11.4} {:>9.4} {:>9.2} {:>9} {:>7}",
            r.name,
            r.episodes,
            r.summary.mean_episodic_reward,
            r.summary.std_episodic_reward,
            r.summary.aop_accuracy,
            r.summary.mean_detection_latency,
            r.summary.switches_detected,
            r.summary.false_switches
        );
        let labels: Vec<String> = (0..REWARD_HISTOGRAM_BINS)
            .map(|i| {
                let low = REWARD_HISTOGRAM_MIN + i as f64 * REWARD_HISTOGRAM_BIN_WIDTH;
                format!("{low}")
            })
            .collect();
        println!("  histogram bins (left edges): {}", labels.join(","));
        let counts: Vec<String> = r.histogram.iter().map(|c| c.to_string()).collect();
        println!("  histogram counts:            {}", counts.join(","));
    }

    if let Some(out) = out {
        let mut csv = String::from(
            "file,episodes,reward_mean,reward_std,aop_accuracy,detection_latency,\
             switches_detected,false_switches",
        );
        for i in 0..REWARD_HISTOGRAM_BINS {
            let low = REWARD_HISTOGRAM_MIN + i as f64 * REWARD_HISTOGRAM_BIN_WIDTH;
            write!(csv, ",bin_{low}").expect("writing to a String cannot fail");
        }
        csv.push('\n');
        for r in &reports {
            write!(
                csv,
                "\"{}\",{},{},{},{},{},{},{}",
                r.name,
                r.episodes,
                r.summary.mean_episodic_reward,
                r.summary.std_episodic_reward,
                r.summary.aop_accuracy,
                r.summary.mean_detection_latency,
                r.summary.switches_detected,
                r.summary.false_switches
            )
            .expect("writing to a String cannot fail");
            for count in &r.histogram {
                write!(csv, ",{count}").expect("writing to a String cannot fail");
            }
            csv.push('\n');
        }
        prepare_out_dir(out)?;
        write_output(&out.join("report.csv"), &csv)?;
    }
    Ok(())
}
