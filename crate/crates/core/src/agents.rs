//! Scripted stochastic policies and the opponent's switch schedule.
//!
//! The chase policy is the closed-form stand-in for a trained agent: it puts
//! mass `1 - epsilon` uniformly on the moves that strictly reduce Manhattan
//! distance to its target prey and spreads `epsilon` over the rest, so the
//! detector can query exact probabilities at any state. Predator B's two
//! modes (chase X, chase Y) form the opponent bank; Predator A's responses
//! target the other prey.

use serde::{Deserialize, Serialize};

use crate::gridworld::{manhattan, GridAction, GridState};
use crate::policy::{ActionDistribution, Policy, PolicyBank, PolicyId, ResponseBank};
use crate::{Error, Result};

/// Which prey a chase policy hunts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PreyId {
    X,
    Y,
}

/// Which predator's position a policy steers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredatorId {
    A,
    B,
}

/// Noise level used for opponent chase policies.
pub const OPPONENT_EPSILON: f64 = 0.1;
/// Noise level used for the agent's response chase policies.
pub const RESPONSE_EPSILON: f64 = 0.05;

/// Greedy-with-noise pursuit of one prey on a bounded grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChasePolicy {
    pub target: PreyId,
    pub epsilon: f64,
    pub role: PredatorId,
    pub width: u32,
    pub height: u32,
}

impl ChasePolicy {
    pub fn new(
        target: PreyId,
        epsilon: f64,
        role: PredatorId,
        width: u32,
        height: u32,
    ) -> Result<Self> {
        if !epsilon.is_finite() || !(0.0..1.0).contains(&epsilon) {
            return Err(Error::InvalidConfig(format!(
                "chase epsilon must lie in [0, 1), got {epsilon}"
            )));
        }
        if width < 2 || height < 2 {
            return Err(Error::InvalidConfig(format!(
                "chase grid must be at least 2x2, got {width}x{height}"
            )));
        }
        Ok(Self {
            target,
            epsilon,
            role,
            width,
            height,
        })
    }

    /// Exact action distribution at a state.
    ///
    /// Mass `1 - epsilon` splits uniformly over the moves whose clamped
    /// successor strictly reduces distance to the target; when the role
    /// predator already stands on the target that set is `{Stay}`. A caught
    /// target leaves nothing to chase, so the policy goes uniform.
    pub fn distribution(&self, state: &GridState) -> ActionDistribution {
        let caught = match self.target {
            PreyId::X => state.caught_x,
            PreyId::Y => state.caught_y,
        };
        if caught {
            return ActionDistribution::uniform(GridAction::COUNT)
                .expect("5 actions is a valid count");
        }
        let own = match self.role {
            PredatorId::A => state.pos_a,
            PredatorId::B => state.pos_b,
        };
        let target = match self.target {
            PreyId::X => state.pos_x,
            PreyId::Y => state.pos_y,
        };
        let current = manhattan(own, target);
        let mut reducing = [false; GridAction::COUNT];
        let mut reducing_count = 0usize;
        for action in GridAction::ALL {
            let successor = own.step(action, self.width, self.height);
            if manhattan(successor, target) < current {
                reducing[action.index()] = true;
                reducing_count += 1;
            }
        }
        if reducing_count == 0 {
            // Co-located with the target: hold position.
            reducing[GridAction::Stay.index()] = true;
            reducing_count = 1;
        }
        let preferred = (1.0 - self.epsilon) / reducing_count as f64;
        let rest = self.epsilon / (GridAction::COUNT - reducing_count) as f64;
        let probs = reducing
            .iter()
            .map(|&is_reducing| if is_reducing { preferred } else { rest })
            .collect();
        ActionDistribution::new(probs).expect("mass splits form a valid distribution")
    }
}

/// Response policy for a known opponent mode: Predator A hunts the prey the
/// opponent is not chasing, splitting the work.
pub fn response_policy_for(opponent: PolicyId) -> Result<Policy> {
    response_policy_with_epsilon(opponent, RESPONSE_EPSILON, 10, 10)
}

/// [`response_policy_for`] with explicit noise and grid dimensions.
pub fn response_policy_with_epsilon(
    opponent: PolicyId,
    epsilon: f64,
    width: u32,
    height: u32,
) -> Result<Policy> {
    let target = match opponent.index() {
        0 => PreyId::Y, // opponent chases X
        1 => PreyId::X, // opponent chases Y
        other => return Err(Error::UnknownPolicyId(other)),
    };
    Ok(Policy::Chase(ChasePolicy::new(
        target,
        epsilon,
        PredatorId::A,
        width,
        height,
    )?))
}

/// The two-mode opponent bank: id 0 chases X, id 1 chases Y, both steering
/// Predator B.
pub fn standard_opponent_bank(epsilon: f64, width: u32, height: u32) -> Result<PolicyBank> {
    PolicyBank::new(vec![
        Policy::Chase(ChasePolicy::new(PreyId::X, epsilon, PredatorId::B, width, height)?),
        Policy::Chase(ChasePolicy::new(PreyId::Y, epsilon, PredatorId::B, width, height)?),
    ])
}

/// Responses matched to [`standard_opponent_bank`], steering Predator A at
/// the complementary prey.
pub fn standard_response_bank(epsilon: f64, width: u32, height: u32) -> Result<ResponseBank> {
    ResponseBank::new(vec![
        response_policy_with_epsilon(PolicyId(0), epsilon, width, height)?,
        response_policy_with_epsilon(PolicyId(1), epsilon, width, height)?,
    ])
}

/// Cyclic schedule of opponent policy ids, advancing every `period` steps.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchSchedule {
    pub period: u32,
    pub sequence: Vec<PolicyId>,
}

impl Default for SwitchSchedule {
    fn default() -> Self {
        Self {
            period: 100,
            sequence: vec![PolicyId(0), PolicyId(1)],
        }
    }
}

impl SwitchSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.period < 1 {
            return Err(Error::InvalidConfig("switch period must be at least 1".into()));
        }
        if self.sequence.is_empty() {
            return Err(Error::InvalidConfig("switch sequence must not be empty".into()));
        }
        Ok(())
    }

    /// Policy in force at global timestep `t`:
    /// `sequence[(t / period) % len]`.
    pub fn policy_at(&self, t: u64) -> PolicyId {
        let slot = (t / u64::from(self.period)) as usize % self.sequence.len();
        self.sequence[slot]
    }
}
