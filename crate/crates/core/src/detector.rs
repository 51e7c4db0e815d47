//! The online switch detector.
//!
//! One running error is kept per bank policy. Every observed state-action
//! pair charges each policy `observed_error - decay` and clamps the total to
//! `[0, threshold]`. When the assumed policy's running error reaches the
//! threshold a switch is declared: the policy with the minimum running error
//! (excluding the outgoing one, lowest id on ties) becomes the new assumption
//! and its running error is halved to damp immediate re-switching.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error_estimation::{decay, observed_error};
use crate::policy::{ObservedAction, PolicyBank, PolicyId, ResponseBank};
use crate::{Error, Result};

/// How the assumed policy is chosen at construction and on reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialAssumed {
    /// Start from a fixed bank id.
    Policy(PolicyId),
    /// Draw uniformly from the bank with the caller's random source.
    Random,
}

impl Default for InitialAssumed {
    fn default() -> Self {
        InitialAssumed::Policy(PolicyId(0))
    }
}

// Serialized as either a bare integer id or the string "random".
impl Serialize for InitialAssumed {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            InitialAssumed::Policy(id) => serializer.serialize_u64(id.index() as u64),
            InitialAssumed::Random => serializer.serialize_str("random"),
        }
    }
}

impl<'de> Deserialize<'de> for InitialAssumed {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Index(usize),
            Name(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Index(i) => Ok(InitialAssumed::Policy(PolicyId(i))),
            Repr::Name(s) if s == "random" => Ok(InitialAssumed::Random),
            Repr::Name(s) => Err(serde::de::Error::custom(format!(
                "initial_assumed must be a policy index or \"random\", got \"{s}\""
            ))),
        }
    }
}

/// Detector hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Strictness factor of the decay, in `[0, 1]`.
    pub alpha: f64,
    /// Running-error ceiling whose attainment by the assumed policy signals a
    /// switch. Must be positive.
    pub threshold: f64,
    #[serde(default)]
    pub initial_assumed: InitialAssumed,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            alpha: 0.95,
            threshold: 5.0,
            initial_assumed: InitialAssumed::default(),
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.alpha.is_finite() || !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidAlpha(self.alpha));
        }
        if !self.threshold.is_finite() || self.threshold <= 0.0 {
            return Err(Error::InvalidConfig(format!(
                "threshold must be positive, got {}",
                self.threshold
            )));
        }
        Ok(())
    }
}

/// Per-policy numbers produced by one observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyErrorUpdate {
    /// `1 - p(action)` under this policy at the observed state.
    pub observed_error: f64,
    /// Decay subtracted this step.
    pub decay: f64,
    /// Running error after the update and clamp, before any switch halving.
    pub running_error: f64,
}

/// A declared switch: the outgoing and incoming assumed policy ids.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SwitchEvent {
    pub from: PolicyId,
    pub to: PolicyId,
}

/// Record of one observation step.
///
/// `per_policy[i]` holds policy `i`'s numbers from the accumulate-and-clamp
/// phase. When `switched` is present, the detector state additionally halved
/// the incoming policy's running error, so `Detector::running_errors` may
/// differ from `per_policy` for that one id.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorUpdate {
    pub per_policy: Vec<PolicyErrorUpdate>,
    pub switched: Option<SwitchEvent>,
    pub assumed_after: PolicyId,
}

/// Online policy-switch detector state.
///
/// Single-writer: `observe`/`reset` mutate in place and must be externally
/// serialized. Distinct instances are independent.
#[derive(Debug, Clone)]
pub struct Detector {
    bank: PolicyBank,
    responses: ResponseBank,
    config: DetectorConfig,
    running_errors: Vec<f64>,
    assumed: PolicyId,
    switch_count: u64,
}

impl Detector {
    /// Builds a detector over a bank and its response bank.
    ///
    /// The random source is only consumed when the config asks for a random
    /// initial assumption.
    pub fn new<R: Rng + ?Sized>(
        bank: PolicyBank,
        responses: ResponseBank,
        config: DetectorConfig,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        if responses.len() != bank.len() {
            return Err(Error::ResponseBankMismatch {
                expected: bank.len(),
                got: responses.len(),
            });
        }
        let assumed = Self::pick_initial(&bank, config.initial_assumed, rng)?;
        Ok(Self {
            running_errors: vec![0.0; bank.len()],
            bank,
            responses,
            config,
            assumed,
            switch_count: 0,
        })
    }

    fn pick_initial<R: Rng + ?Sized>(
        bank: &PolicyBank,
        initial: InitialAssumed,
        rng: &mut R,
    ) -> Result<PolicyId> {
        match initial {
            InitialAssumed::Policy(id) => {
                bank.get(id)?;
                Ok(id)
            }
            InitialAssumed::Random => Ok(PolicyId(rng.random_range(0..bank.len()))),
        }
    }

    /// Feeds one observed opponent state-action pair through the running-error
    /// update. On error the detector state is unchanged.
    pub fn observe(&mut self, state: &str, action: ObservedAction) -> Result<DetectorUpdate> {
        let n = self.bank.action_count();
        if action.index() >= n {
            return Err(Error::InvalidActionIndex {
                index: action.index(),
                n,
            });
        }
        // Evaluate every policy before touching state so a bad state key
        // cannot leave a partial update behind.
        let dists = self
            .bank
            .iter()
            .map(|(_, policy)| policy.evaluate(state))
            .collect::<Result<Vec<_>>>()?;

        let threshold = self.config.threshold;
        let mut per_policy = Vec::with_capacity(dists.len());
        let mut assumed_reached_threshold = false;
        for (i, dist) in dists.iter().enumerate() {
            let e_o = observed_error(dist, action)?;
            let d = decay(dist, self.config.alpha)?;
            let raw = self.running_errors[i] + e_o - d;
            // Threshold attainment is tested on the pre-clamp value; after
            // clamping the two are the same event without the float-equality
            // fragility.
            if i == self.assumed.index() && raw >= threshold {
                assumed_reached_threshold = true;
            }
            let clamped = raw.clamp(0.0, threshold);
            self.running_errors[i] = clamped;
            per_policy.push(PolicyErrorUpdate {
                observed_error: e_o,
                decay: d,
                running_error: clamped,
            });
        }

        // A one-policy bank has no alternative to switch to; the running
        // error still updates and clamps above.
        let mut switched = None;
        if assumed_reached_threshold && self.bank.len() > 1 {
            let from = self.assumed;
            let to = self.argmin_excluding(from);
            self.running_errors[to.index()] /= 2.0;
            self.assumed = to;
            self.switch_count += 1;
            switched = Some(SwitchEvent { from, to });
        }

        Ok(DetectorUpdate {
            per_policy,
            switched,
            assumed_after: self.assumed,
        })
    }

    // Lowest id wins ties; the outgoing policy is never a candidate, otherwise
    // a bank pinned at the threshold could re-elect the policy that just
    // triggered the switch.
    fn argmin_excluding(&self, excluded: PolicyId) -> PolicyId {
        let mut best: Option<(usize, f64)> = None;
        for (i, &err) in self.running_errors.iter().enumerate() {
            if i == excluded.index() {
                continue;
            }
            match best {
                Some((_, best_err)) if err >= best_err => {}
                _ => best = Some((i, err)),
            }
        }
        PolicyId(best.expect("bank has at least two policies").0)
    }

    /// Samples the agent's action from the response policy matched to the
    /// currently assumed opponent policy.
    pub fn respond<R: Rng + ?Sized>(&self, state: &str, rng: &mut R) -> Result<ObservedAction> {
        self.responses.get(self.assumed)?.sample_action(state, rng)
    }

    /// Zeroes all running errors and re-initializes the assumption per config.
    /// Banks and config are unchanged.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        self.running_errors.fill(0.0);
        self.assumed = Self::pick_initial(&self.bank, self.config.initial_assumed, rng)?;
        self.switch_count = 0;
        Ok(())
    }

    pub fn bank(&self) -> &PolicyBank {
        &self.bank
    }

    pub fn responses(&self) -> &ResponseBank {
        &self.responses
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn assumed(&self) -> PolicyId {
        self.assumed
    }

    pub fn running_errors(&self) -> &[f64] {
        &self.running_errors
    }

    pub fn switch_count(&self) -> u64 {
        self.switch_count
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{ActionDistribution, Policy, TabularPolicy};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn constant_policy(probs: &[f64]) -> Policy {
        Policy::Tabular(TabularPolicy::constant(
            ActionDistribution::new(probs.to_vec()).unwrap(),
        ))
    }

    fn two_policy_detector(alpha: f64, threshold: f64) -> Detector {
        let bank =
            PolicyBank::new(vec![constant_policy(&[1.0, 0.0]), constant_policy(&[0.0, 1.0])])
                .unwrap();
        let responses =
            ResponseBank::new(vec![constant_policy(&[1.0, 0.0]), constant_policy(&[0.0, 1.0])])
                .unwrap();
        let config = DetectorConfig {
            alpha,
            threshold,
            initial_assumed: InitialAssumed::Policy(PolicyId(0)),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        Detector::new(bank, responses, config, &mut rng).unwrap()
    }

    /// Independent transcription of the running-error update used as a test
    /// oracle: per observation, for each candidate distribution, accumulate
    /// observed error minus decay with both clamps, then apply the switch
    /// rule. Errors are computed through the half-L1 route so the oracle does
    /// not share the implementation's code path.
    struct ReferenceSim {
        dists: Vec<Vec<f64>>,
        alpha: f64,
        threshold: f64,
        running: Vec<f64>,
        assumed: usize,
    }

    impl ReferenceSim {
        fn new(dists: Vec<Vec<f64>>, alpha: f64, threshold: f64, assumed: usize) -> Self {
            let k = dists.len();
            Self {
                dists,
                alpha,
                threshold,
                running: vec![0.0; k],
                assumed,
            }
        }

        fn observe(&mut self, action: usize) -> Option<(usize, usize)> {
            for (i, dist) in self.dists.iter().enumerate() {
                let n = dist.len() as f64;
                let e_o: f64 = 0.5
                    * dist
                        .iter()
                        .enumerate()
                        .map(|(k, &p)| if k == action { (1.0 - p).abs() } else { p.abs() })
                        .sum::<f64>();
                let e_f: f64 = dist.iter().map(|&p| p * (1.0 - p)).sum();
                let e_nf = (n - 1.0) / n;
                let d = self.alpha * e_f + (1.0 - self.alpha) * e_nf;
                self.running[i] += e_o - d;
                if self.running[i] < 0.0 {
                    self.running[i] = 0.0;
                }
                if self.running[i] > self.threshold {
                    self.running[i] = self.threshold;
                }
            }
            if self.running[self.assumed] == self.threshold && self.dists.len() > 1 {
                let from = self.assumed;
                let to = (0..self.dists.len())
                    .filter(|&i| i != from)
                    .min_by(|&a, &b| self.running[a].partial_cmp(&self.running[b]).unwrap())
                    .unwrap();
                self.running[to] /= 2.0;
                self.assumed = to;
                return Some((from, to));
            }
            None
        }
    }

    #[test]
    fn compliant_deterministic_policy_keeps_zero_running_error() {
        let mut det = two_policy_detector(0.99, 5.0);
        for _ in 0..100 {
            let update = det.observe("s", ObservedAction(0)).unwrap();
            assert_eq!(update.per_policy[0].running_error, 0.0);
            assert!(update.switched.is_none());
        }
        assert_eq!(det.assumed(), PolicyId(0));
    }

    #[test]
    fn repeated_violation_switches_on_the_sixth_observation() {
        // alpha = 0.99, threshold = 5: per-step increment for the violated
        // deterministic policy is 1 - 0.01 * 0.5 = 0.995, so the running
        // error reaches 5 on observation ceil(5 / 0.995) = 6.
        let mut det = two_policy_detector(0.99, 5.0);
        let mut oracle =
            ReferenceSim::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], 0.99, 5.0, 0);
        for step in 1..=6 {
            let update = det.observe("s", ObservedAction(1)).unwrap();
            let oracle_switch = oracle.observe(1);
            for (i, p) in update.per_policy.iter().enumerate() {
                // The oracle halves at switch, the update record does not.
                let expected = if oracle_switch == Some((0, i)) {
                    oracle.running[i] * 2.0
                } else {
                    oracle.running[i]
                };
                assert!(
                    (p.running_error - expected).abs() < 1e-12,
                    "step {step}, policy {i}: {} vs oracle {expected}",
                    p.running_error
                );
            }
            if step < 6 {
                assert!(update.switched.is_none(), "premature switch at step {step}");
            } else {
                let event = update.switched.expect("switch expected on observation 6");
                assert_eq!(event.from, PolicyId(0));
                assert_eq!(event.to, PolicyId(1));
                assert_eq!(update.assumed_after, PolicyId(1));
                assert_eq!(oracle_switch, Some((0, 1)));
            }
        }
        assert_eq!(det.switch_count(), 1);
    }

    #[test]
    fn violation_hits_threshold_at_the_closed_form_observation_count() {
        // With the {[1,0],[0,1]} pair the per-step increment is exactly
        // 1 - (1 - alpha) * 0.5, so the switch lands on observation
        // ceil(threshold / increment).
        for &alpha in &[0.0, 0.8, 0.9, 0.95, 0.99] {
            let threshold = 5.0;
            let mut det = two_policy_detector(alpha, threshold);
            let increment = 1.0 - (1.0 - alpha) * 0.5;
            let expected_steps = (threshold / increment).ceil() as u32;
            let mut switched_at = None;
            for step in 1..=expected_steps + 2 {
                let update = det.observe("s", ObservedAction(1)).unwrap();
                if update.switched.is_some() {
                    switched_at = Some(step);
                    break;
                }
            }
            assert_eq!(
                switched_at,
                Some(expected_steps),
                "alpha {alpha}: expected switch on observation {expected_steps}"
            );
        }
    }

    #[test]
    fn switch_halves_the_incoming_policy_running_error() {
        // pi2 = [0.8, 0.2] accumulates a nonzero running error while pi1 is
        // violated, so the halving is visible.
        let bank =
            PolicyBank::new(vec![constant_policy(&[1.0, 0.0]), constant_policy(&[0.8, 0.2])])
                .unwrap();
        let responses =
            ResponseBank::new(vec![constant_policy(&[1.0, 0.0]), constant_policy(&[0.8, 0.2])])
                .unwrap();
        let config = DetectorConfig {
            alpha: 0.99,
            threshold: 5.0,
            initial_assumed: InitialAssumed::Policy(PolicyId(0)),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut det = Detector::new(bank, responses, config, &mut rng).unwrap();
        loop {
            let update = det.observe("s", ObservedAction(1)).unwrap();
            if let Some(event) = update.switched {
                assert_eq!(event.to, PolicyId(1));
                let before = update.per_policy[1].running_error;
                assert!(before > 0.0);
                assert_eq!(det.running_errors()[1], before / 2.0);
                break;
            }
        }
    }

    #[test]
    fn single_policy_bank_never_switches() {
        let bank = PolicyBank::new(vec![constant_policy(&[1.0, 0.0])]).unwrap();
        let responses = ResponseBank::new(vec![constant_policy(&[1.0, 0.0])]).unwrap();
        let config = DetectorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut det = Detector::new(bank, responses, config, &mut rng).unwrap();
        for _ in 0..100 {
            let update = det.observe("s", ObservedAction(1)).unwrap();
            assert!(update.switched.is_none());
            assert!(det.running_errors()[0] <= 5.0);
        }
        assert_eq!(det.running_errors()[0], 5.0);
        assert_eq!(det.switch_count(), 0);
    }

    #[test]
    fn invalid_action_leaves_state_unchanged() {
        let mut det = two_policy_detector(0.99, 5.0);
        det.observe("s", ObservedAction(1)).unwrap();
        let before = det.running_errors().to_vec();
        assert!(det.observe("s", ObservedAction(2)).is_err());
        assert_eq!(det.running_errors(), before.as_slice());
    }

    #[test]
    fn reset_zeroes_errors_and_reinitializes_assumption() {
        let mut det = two_policy_detector(0.99, 5.0);
        for _ in 0..10 {
            det.observe("s", ObservedAction(1)).unwrap();
        }
        assert!(det.running_errors().iter().any(|&e| e > 0.0));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        det.reset(&mut rng).unwrap();
        assert!(det.running_errors().iter().all(|&e| e == 0.0));
        assert_eq!(det.assumed(), PolicyId(0));
        assert_eq!(det.switch_count(), 0);
    }

    #[test]
    fn random_initial_assumption_is_reproducible() {
        let bank = PolicyBank::new(vec![
            constant_policy(&[1.0, 0.0]),
            constant_policy(&[0.5, 0.5]),
            constant_policy(&[0.0, 1.0]),
        ])
        .unwrap();
        let responses = ResponseBank::new(vec![
            constant_policy(&[1.0, 0.0]),
            constant_policy(&[0.5, 0.5]),
            constant_policy(&[0.0, 1.0]),
        ])
        .unwrap();
        let config = DetectorConfig {
            alpha: 0.95,
            threshold: 5.0,
            initial_assumed: InitialAssumed::Random,
        };
        let pick = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            Detector::new(bank.clone(), responses.clone(), config.clone(), &mut rng)
                .unwrap()
                .assumed()
        };
        assert_eq!(pick(7), pick(7));
    }

    #[test]
    fn respond_uses_the_current_assumption() {
        let bank =
            PolicyBank::new(vec![constant_policy(&[1.0, 0.0]), constant_policy(&[0.0, 1.0])])
                .unwrap();
        // Deterministic responses distinguishable by action.
        let responses =
            ResponseBank::new(vec![constant_policy(&[1.0, 0.0]), constant_policy(&[0.0, 1.0])])
                .unwrap();
        let config = DetectorConfig {
            alpha: 0.99,
            threshold: 5.0,
            initial_assumed: InitialAssumed::Policy(PolicyId(0)),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut det = Detector::new(bank, responses, config, &mut rng).unwrap();
        assert_eq!(det.respond("s", &mut rng).unwrap(), ObservedAction(0));
        // Force the switch, then the response policy follows.
        for _ in 0..6 {
            det.observe("s", ObservedAction(1)).unwrap();
        }
        assert_eq!(det.assumed(), PolicyId(1));
        assert_eq!(det.respond("s", &mut rng).unwrap(), ObservedAction(1));
    }

    #[test]
    fn compliant_stochastic_policy_stays_below_half_threshold() {
        // Negative drift under compliance: with alpha = 0.95 the expected
        // per-step increment is 0.05 * (e_f - e_nf) < 0 for a non-uniform
        // policy. Sharp two-action policy, 1000 compliant steps, 100 seeded
        // trials: the running error ends below threshold/2 in >= 99 of them.
        let probs = [0.98, 0.02];
        let policy = constant_policy(&probs);
        let bank = PolicyBank::new(vec![policy.clone(), constant_policy(&[0.0, 1.0])]).unwrap();
        let responses =
            ResponseBank::new(vec![policy.clone(), constant_policy(&[0.0, 1.0])]).unwrap();
        let config = DetectorConfig {
            alpha: 0.95,
            threshold: 5.0,
            initial_assumed: InitialAssumed::Policy(PolicyId(0)),
        };
        let mut below = 0;
        for trial in 0..100u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
            let mut det =
                Detector::new(bank.clone(), responses.clone(), config.clone(), &mut rng).unwrap();
            for _ in 0..1000 {
                let action = bank.get(PolicyId(0)).unwrap().sample_action("s", &mut rng).unwrap();
                det.observe("s", action).unwrap();
            }
            if det.running_errors()[0] < 2.5 {
                below += 1;
            }
        }
        assert!(below >= 99, "only {below}/100 trials stayed below threshold/2");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn running_errors_stay_clamped(
            dists in proptest::collection::vec(
                proptest::collection::vec(0.01f64..1.0, 3),
                2..=5,
            ),
            actions in proptest::collection::vec(0usize..3, 1..200),
            threshold in 0.5f64..10.0,
            alpha in 0.0f64..=1.0,
        ) {
            let policies: Vec<Policy> = dists
                .iter()
                .map(|raw| {
                    let total: f64 = raw.iter().sum();
                    let normalized: Vec<f64> = raw.iter().map(|p| p / total).collect();
                    constant_policy(&normalized)
                })
                .collect();
            let bank = PolicyBank::new(policies.clone()).unwrap();
            let responses = ResponseBank::new(policies).unwrap();
            let config = DetectorConfig {
                alpha,
                threshold,
                initial_assumed: InitialAssumed::Policy(PolicyId(0)),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let mut det = Detector::new(bank, responses, config, &mut rng).unwrap();
            for &a in &actions {
                let update = det.observe("s", ObservedAction(a)).unwrap();
                for err in det.running_errors() {
                    prop_assert!((0.0..=threshold).contains(err));
                }
                if let Some(event) = update.switched {
                    prop_assert_ne!(event.from, event.to);
                    let pre = update.per_policy[event.to.index()].running_error;
                    prop_assert_eq!(det.running_errors()[event.to.index()], pre / 2.0);
                }
            }
        }
    }
}
