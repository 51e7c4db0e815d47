//! Quick diagnostic: run one experiment and print per-alpha summaries plus a
//! window-level view of the running-error traces.

use opsdemo_core::detector::{DetectorConfig, InitialAssumed};
use opsdemo_core::experiment::{run_experiment, sweep_alpha, AgentMode, ExperimentConfig};
use opsdemo_core::policy::PolicyId;
use opsdemo_core::SwitchSchedule;

fn main() {
    let config = ExperimentConfig {
        episodes: 100,
        runs: 10,
        base_seed: 42,
        switch: SwitchSchedule {
            period: 100,
            sequence: vec![PolicyId(0), PolicyId(1)],
        },
        detector: DetectorConfig {
            alpha: 0.95,
            threshold: 5.0,
            initial_assumed: InitialAssumed::Policy(PolicyId(0)),
        },
        ..ExperimentConfig::default()
    };
    let (metrics, summary) = run_experiment(&config).unwrap();
    println!("alpha=0.95 summary: {summary:#?}");
    println!("rows: {}", metrics.rows.len());

    // Cross-run mean traces of RE(actual) and RE(other), per window.
    let t_min = (0..config.runs)
        .map(|r| {
            metrics
                .rows
                .iter()
                .filter(|row| row.run == r)
                .map(|row| row.t)
                .max()
                .unwrap()
                + 1
        })
        .min()
        .unwrap();
    println!("t_min across runs: {t_min}");
    let mut true_mean = vec![0.0f64; t_min as usize];
    let mut false_mean = vec![0.0f64; t_min as usize];
    let mut count = vec![0u32; t_min as usize];
    for row in &metrics.rows {
        if row.t < t_min {
            let actual = row.actual.index();
            true_mean[row.t as usize] += row.running_errors[actual];
            false_mean[row.t as usize] += row.running_errors[1 - actual];
            count[row.t as usize] += 1;
        }
    }
    for t in 0..t_min as usize {
        true_mean[t] /= f64::from(count[t]);
        false_mean[t] /= f64::from(count[t]);
    }
    let period = 100usize;
    let windows = (t_min as usize) / period;
    for w in 1..windows {
        let start = w * period;
        let second_half = start + period / 2..start + period;
        let ok_true = second_half.clone().filter(|&t| true_mean[t] < 1.25).count();
        let ok_false = second_half.clone().filter(|&t| false_mean[t] > 3.75).count();
        println!(
            "window {w:2}: true<1.25 at {ok_true}/50, false>3.75 at {ok_false}/50, true@start {:.2}, true@mid {:.2}, true@end {:.2}",
            true_mean[start], true_mean[start + 50], true_mean[start + 99]
        );
    }

    // Alpha sweep, 20 runs.
    let sweep_config = ExperimentConfig {
        runs: 20,
        ..config.clone()
    };
    for (alpha, s) in sweep_alpha(&sweep_config, &[0.8, 0.9, 0.95, 0.99]).unwrap() {
        println!(
            "alpha {alpha}: accuracy {:.4}, latency {:.2}, switches {}, false {}",
            s.aop_accuracy, s.mean_detection_latency, s.switches_detected, s.false_switches
        );
    }

    // Reward comparison.
    let ops = ExperimentConfig {
        episodes: 200,
        runs: 25,
        ..config.clone()
    };
    let baseline = ExperimentConfig {
        agent_mode: AgentMode::FixedBaseline,
        ..ops.clone()
    };
    let (_, ops_summary) = run_experiment(&ops).unwrap();
    let (_, base_summary) = run_experiment(&baseline).unwrap();
    println!(
        "opsdemo:  mean {:.3} std {:.3}",
        ops_summary.mean_episodic_reward, ops_summary.std_episodic_reward
    );
    println!(
        "baseline: mean {:.3} std {:.3}",
        base_summary.mean_episodic_reward, base_summary.std_episodic_reward
    );
}
