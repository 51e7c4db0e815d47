//! Seeded end-to-end experiment runs.
//!
//! Each run owns its environment, detector, and random stream, so runs are
//! embarrassingly parallel; results merge in run-index order, making output
//! independent of the parallelism. Per timestep the pipeline is: look up the
//! scheduled opponent policy, sample the opponent's action, feed it to the
//! detector, sample the agent's response, sample the two prey uniformly, and
//! step the environment. Running errors persist across episode boundaries;
//! only the environment resets per episode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{
    standard_opponent_bank, standard_response_bank, SwitchSchedule, OPPONENT_EPSILON,
    RESPONSE_EPSILON,
};
use crate::detector::{Detector, DetectorConfig};
use crate::gridworld::{reset_episode, state_key, step, GridAction, GridConfig, JointAction};
use crate::metrics::{Metrics, MetricsRow, Summary};
use crate::{Error, Result};

/// Whether the agent adapts online or keeps its initial assumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentMode {
    /// Full pipeline: observe, update running errors, switch, respond.
    Opsdemo,
    /// Same response machinery with detection disabled: the assumption never
    /// changes and running errors are never updated.
    FixedBaseline,
}

impl Default for AgentMode {
    fn default() -> Self {
        AgentMode::Opsdemo
    }
}

/// Full experiment description; serializes to the config JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub grid: GridConfig,
    pub detector: DetectorConfig,
    pub switch: SwitchSchedule,
    /// Episodes per run.
    pub episodes: u32,
    /// Independent seeded repetitions.
    pub runs: u32,
    pub base_seed: u64,
    pub agent_mode: AgentMode,
    /// Noise of the opponent's chase policies.
    pub opponent_epsilon: f64,
    /// Noise of the agent's response chase policies.
    pub response_epsilon: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: GridConfig::default(),
            detector: DetectorConfig::default(),
            switch: SwitchSchedule::default(),
            episodes: 1,
            runs: 1,
            base_seed: 0,
            agent_mode: AgentMode::Opsdemo,
            opponent_epsilon: OPPONENT_EPSILON,
            response_epsilon: RESPONSE_EPSILON,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.detector.validate()?;
        self.switch.validate()?;
        if self.episodes < 1 {
            return Err(Error::InvalidConfig("episodes must be at least 1".into()));
        }
        if self.runs < 1 {
            return Err(Error::InvalidConfig("runs must be at least 1".into()));
        }
        for epsilon in [self.opponent_epsilon, self.response_epsilon] {
            if !epsilon.is_finite() || !(0.0..1.0).contains(&epsilon) {
                return Err(Error::InvalidConfig(format!(
                    "chase epsilon must lie in [0, 1), got {epsilon}"
                )));
            }
        }
        // The built-in opponent bank has exactly two modes.
        for id in &self.switch.sequence {
            if id.index() >= 2 {
                return Err(Error::InvalidConfig(format!(
                    "switch sequence references policy {id}, bank has 2 policies"
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let config: ExperimentConfig = serde_json::from_str(json)?;
        config.validate()?;
        Ok(config)
    }
}

// SplitMix64 finalizer; spreads consecutive inputs over the u64 range.
fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D049BB133111EB);
    x ^ (x >> 31)
}

/// Seed of run `run_index`: `splitmix64(base_seed XOR (run_index + 1))`.
/// Fixed so that runs can execute in any order or in parallel and still
/// reproduce bit-identically.
pub fn run_seed(base_seed: u64, run_index: u32) -> u64 {
    splitmix64(base_seed ^ u64::from(run_index).wrapping_add(1))
}

/// Executes one seeded run and returns its metrics rows.
///
/// Per timestep the random stream is consumed in a fixed order: opponent
/// action, agent action, prey X action, prey Y action. Episode resets draw
/// positions from the same stream.
pub fn run_single(config: &ExperimentConfig, run_index: u32) -> Result<Vec<MetricsRow>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(run_seed(config.base_seed, run_index));
    let bank = standard_opponent_bank(config.opponent_epsilon, config.grid.width, config.grid.height)?;
    let responses =
        standard_response_bank(config.response_epsilon, config.grid.width, config.grid.height)?;
    let mut detector = Detector::new(bank.clone(), responses, config.detector.clone(), &mut rng)?;

    let mut rows = Vec::new();
    let mut t_global: u64 = 0;
    for episode in 0..config.episodes {
        let mut state = reset_episode(&config.grid, &mut rng);
        loop {
            let key = state_key(&state);
            let actual = config.switch.policy_at(t_global);
            let opponent_action = bank.get(actual)?.sample_action(&key, &mut rng)?;
            let switched = match config.agent_mode {
                AgentMode::Opsdemo => detector
                    .observe(&key, opponent_action)?
                    .switched
                    .is_some(),
                AgentMode::FixedBaseline => false,
            };
            let agent_action = detector.respond(&key, &mut rng)?;
            let prey = |rng: &mut ChaCha8Rng| {
                GridAction::from_index(rng.random_range(0..GridAction::COUNT))
                    .expect("index in range")
            };
            let joint = JointAction {
                a: GridAction::from_index(agent_action.index()).ok_or(
                    Error::InvalidActionIndex {
                        index: agent_action.index(),
                        n: GridAction::COUNT,
                    },
                )?,
                b: GridAction::from_index(opponent_action.index()).ok_or(
                    Error::InvalidActionIndex {
                        index: opponent_action.index(),
                        n: GridAction::COUNT,
                    },
                )?,
                x: prey(&mut rng),
                y: prey(&mut rng),
            };
            let outcome = step(&state, joint, &config.grid)?;
            rows.push(MetricsRow {
                run: run_index,
                episode,
                t: t_global,
                state: key,
                action: opponent_action.index() as u8,
                actual,
                assumed: detector.assumed(),
                running_errors: detector.running_errors().to_vec(),
                reward_a: outcome.reward_a,
                switch: switched,
            });
            t_global += 1;
            state = outcome.next_state;
            if outcome.done {
                break;
            }
        }
    }
    Ok(rows)
}

/// Runs every seeded repetition (in parallel) and aggregates the results.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(Metrics, Summary)> {
    config.validate()?;
    let per_run: Vec<Vec<MetricsRow>> = (0..config.runs)
        .into_par_iter()
        .map(|run_index| run_single(config, run_index))
        .collect::<Result<_>>()?;
    let rows: Vec<MetricsRow> = per_run.into_iter().flatten().collect();
    let metrics = Metrics {
        rows,
        policy_count: 2,
        switch_period: config.switch.period,
    };
    let summary = metrics.summarize()?;
    Ok((metrics, summary))
}

/// Runs one full experiment per strictness factor, sharing the base seed.
pub fn sweep_alpha(config: &ExperimentConfig, alphas: &[f64]) -> Result<Vec<(f64, Summary)>> {
    if alphas.is_empty() {
        return Err(Error::InvalidConfig("alpha sweep needs at least one value".into()));
    }
    for &alpha in alphas {
        if !alpha.is_finite() || !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidAlpha(alpha));
        }
    }
    alphas
        .iter()
        .map(|&alpha| {
            let mut swept = config.clone();
            swept.detector.alpha = alpha;
            let (_, summary) = run_experiment(&swept)?;
            Ok((alpha, summary))
        })
        .collect()
}
