//! Action distributions, the policy abstraction, and policy banks.
//!
//! A [`Policy`] maps a canonical state key to an [`ActionDistribution`]. Three
//! kinds exist: tabular lookup with a declared default, the closed-form chase
//! policy from [`crate::agents`], and uniform. Banks index policies by dense
//! [`PolicyId`]s and reject mixed action counts at construction, so every
//! downstream formula can rely on a single `n`.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::agents::{ChasePolicy, PredatorId, PreyId};
use crate::{Error, Result};

/// Absolute tolerance for the sum-to-one check on distributions.
pub const DIST_SUM_TOLERANCE: f64 = 1e-9;

/// A probability vector over a discrete action set, one entry per action
/// index `0..n-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    probs: Vec<f64>,
}

impl ActionDistribution {
    /// Validates and wraps a probability vector: at least two entries, every
    /// entry in `[0, 1]`, entries summing to one within [`DIST_SUM_TOLERANCE`].
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidActionCount(probs.len()));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidDistribution(format!(
                    "entry {i} is {p}, expected a probability in [0, 1]"
                )));
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DIST_SUM_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "entries sum to {sum}, expected 1 within {DIST_SUM_TOLERANCE}"
            )));
        }
        Ok(Self { probs })
    }

    /// Uniform distribution over `n` actions.
    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidActionCount(n));
        }
        Ok(Self {
            probs: vec![1.0 / n as f64; n],
        })
    }

    /// Number of actions.
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability of the given action.
    pub fn prob(&self, action: ObservedAction) -> Result<f64> {
        self.probs
            .get(action.index())
            .copied()
            .ok_or(Error::InvalidActionIndex {
                index: action.index(),
                n: self.probs.len(),
            })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Draws an action by inverse-CDF lookup on a single uniform variate.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ObservedAction {
        let u: f64 = rng.random();
        let mut cumulative = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            cumulative += p;
            if u < cumulative {
                return ObservedAction(i);
            }
        }
        // Rounding can leave the final cumulative a hair below 1.
        ObservedAction(self.probs.len() - 1)
    }
}

/// An action the opponent was seen to take, by index into the action set.
///
/// The one-hot observation vector it stands for is never materialized; the
/// index is all the error formulas need.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ObservedAction(pub usize);

impl ObservedAction {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Stable index of a policy within a bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicyId(pub usize);

impl PolicyId {
    pub fn index(self) -> usize {
        self.0
    }
}

impl std::fmt::Display for PolicyId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Tabular state-key -> distribution mapping with a declared fallback for
/// unlisted states.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    table: BTreeMap<String, ActionDistribution>,
    default: ActionDistribution,
}

impl TabularPolicy {
    pub fn new(
        table: BTreeMap<String, ActionDistribution>,
        default: ActionDistribution,
    ) -> Result<Self> {
        let n = default.len();
        for (key, dist) in &table {
            if dist.len() != n {
                return Err(Error::InvalidDistribution(format!(
                    "table entry `{key}` has {} actions, default has {n}",
                    dist.len()
                )));
            }
        }
        Ok(Self { table, default })
    }

    /// Tabular policy that emits the same distribution in every state.
    pub fn constant(dist: ActionDistribution) -> Self {
        Self {
            table: BTreeMap::new(),
            default: dist,
        }
    }

    pub fn lookup(&self, state: &str) -> &ActionDistribution {
        self.table.get(state).unwrap_or(&self.default)
    }
}

/// A policy: any state-key to action-distribution mapping the detector can
/// query for exact probabilities.
#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Tabular(TabularPolicy),
    Chase(ChasePolicy),
    Uniform { n: usize },
}

impl Policy {
    /// Number of actions this policy distributes over.
    pub fn action_count(&self) -> usize {
        match self {
            Policy::Tabular(t) => t.default.len(),
            Policy::Chase(_) => crate::gridworld::GridAction::COUNT,
            Policy::Uniform { n } => *n,
        }
    }

    /// Full action distribution at a state.
    pub fn evaluate(&self, state: &str) -> Result<ActionDistribution> {
        match self {
            Policy::Tabular(t) => Ok(t.lookup(state).clone()),
            Policy::Chase(c) => {
                let grid_state = crate::gridworld::parse_state_key(state)?;
                Ok(c.distribution(&grid_state))
            }
            Policy::Uniform { n } => ActionDistribution::uniform(*n),
        }
    }

    /// Probability of one action at a state; equals the corresponding entry of
    /// [`Policy::evaluate`] exactly.
    pub fn action_prob(&self, state: &str, action: ObservedAction) -> Result<f64> {
        self.evaluate(state)?.prob(action)
    }

    /// Draws an action from the policy's distribution at a state.
    pub fn sample_action<R: Rng + ?Sized>(
        &self,
        state: &str,
        rng: &mut R,
    ) -> Result<ObservedAction> {
        Ok(self.evaluate(state)?.sample(rng))
    }
}

/// Ordered bank of candidate opponent policies sharing one action count.
/// Ids are dense: entry `i` has id `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBank {
    policies: Vec<Policy>,
    n: usize,
}

impl PolicyBank {
    pub fn new(policies: Vec<Policy>) -> Result<Self> {
        let first = policies.first().ok_or(Error::EmptyBank)?;
        let n = first.action_count();
        if n < 2 {
            return Err(Error::InvalidActionCount(n));
        }
        for policy in &policies {
            if policy.action_count() != n {
                return Err(Error::MixedActionCounts {
                    expected: n,
                    got: policy.action_count(),
                });
            }
        }
        Ok(Self { policies, n })
    }

    pub fn len(&self) -> usize {
        self.policies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.policies.is_empty()
    }

    /// Shared action count of every policy in the bank.
    pub fn action_count(&self) -> usize {
        self.n
    }

    pub fn get(&self, id: PolicyId) -> Result<&Policy> {
        self.policies
            .get(id.index())
            .ok_or(Error::UnknownPolicyId(id.index()))
    }

    pub fn iter(&self) -> impl Iterator<Item = (PolicyId, &Policy)> {
        self.policies
            .iter()
            .enumerate()
            .map(|(i, p)| (PolicyId(i), p))
    }

    pub fn ids(&self) -> impl Iterator<Item = PolicyId> {
        (0..self.policies.len()).map(PolicyId)
    }

    /// Parses the policy-bank JSON document:
    /// `{"n": int, "policies": [{"kind": ...}, ...]}`.
    pub fn from_json(json: &str) -> Result<Self> {
        let file: BankFile = serde_json::from_str(json)?;
        file.build()
    }
}

/// Map from opponent policy id to the agent's counter-policy, total over the
/// opponent bank's ids (entry `i` responds to opponent policy `i`).
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseBank {
    responses: Vec<Policy>,
}

impl ResponseBank {
    pub fn new(responses: Vec<Policy>) -> Result<Self> {
        let first = responses.first().ok_or(Error::EmptyBank)?;
        let n = first.action_count();
        for policy in &responses {
            if policy.action_count() != n {
                return Err(Error::MixedActionCounts {
                    expected: n,
                    got: policy.action_count(),
                });
            }
        }
        Ok(Self { responses })
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn get(&self, opponent: PolicyId) -> Result<&Policy> {
        self.responses
            .get(opponent.index())
            .ok_or(Error::UnknownPolicyId(opponent.index()))
    }
}

// ---------------------------------------------------------------------------
// Bank file format
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct BankFile {
    n: usize,
    policies: Vec<PolicySpec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum PolicySpec {
    Tabular {
        default: Vec<f64>,
        #[serde(default)]
        table: BTreeMap<String, Vec<f64>>,
    },
    Chase {
        target: String,
        epsilon: f64,
        #[serde(default = "default_chase_role")]
        role: String,
        #[serde(default = "default_grid_dim")]
        width: u32,
        #[serde(default = "default_grid_dim")]
        height: u32,
    },
    Uniform {},
}

fn default_chase_role() -> String {
    "B".to_string()
}

fn default_grid_dim() -> u32 {
    10
}

impl BankFile {
    fn build(self) -> Result<PolicyBank> {
        let n = self.n;
        let policies = self
            .policies
            .into_iter()
            .map(|spec| spec.build(n))
            .collect::<Result<Vec<_>>>()?;
        let bank = PolicyBank::new(policies)?;
        if bank.action_count() != n {
            return Err(Error::MixedActionCounts {
                expected: n,
                got: bank.action_count(),
            });
        }
        Ok(bank)
    }
}

impl PolicySpec {
    fn build(self, n: usize) -> Result<Policy> {
        match self {
            PolicySpec::Tabular { default, table } => {
                let default = ActionDistribution::new(default)?;
                let table = table
                    .into_iter()
                    .map(|(k, v)| Ok((k, ActionDistribution::new(v)?)))
                    .collect::<Result<BTreeMap<_, _>>>()?;
                Ok(Policy::Tabular(TabularPolicy::new(table, default)?))
            }
            PolicySpec::Chase {
                target,
                epsilon,
                role,
                width,
                height,
            } => {
                let target = match target.as_str() {
                    "X" => PreyId::X,
                    "Y" => PreyId::Y,
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "chase target must be \"X\" or \"Y\", got \"{other}\""
                        )))
                    }
                };
                let role = match role.as_str() {
                    "A" => PredatorId::A,
                    "B" => PredatorId::B,
                    other => {
                        return Err(Error::InvalidConfig(format!(
                            "chase role must be \"A\" or \"B\", got \"{other}\""
                        )))
                    }
                };
                Ok(Policy::Chase(ChasePolicy::new(
                    target, epsilon, role, width, height,
                )?))
            }
            PolicySpec::Uniform {} => Ok(Policy::Uniform { n }),
        }
    }
}
