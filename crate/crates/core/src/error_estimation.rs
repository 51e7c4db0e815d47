//! The running-error calculus: observed error of a single action under a
//! candidate policy, the two expected-error baselines, and the dynamic decay
//! blending them.
//!
//! All functions are pure and operate on validated [`ActionDistribution`]s,
//! so results always land in `[0, 1]`.

use crate::policy::{ActionDistribution, ObservedAction};
use crate::Result;

/// Observed error of taking `action` under `dist`: `1 - p(action)`.
///
/// This is the simplified form of the half-L1 distance between the
/// distribution and the one-hot observation (see [`observed_error_l1`]); the
/// two agree to machine precision for every valid input.
pub fn observed_error(dist: &ActionDistribution, action: ObservedAction) -> Result<f64> {
    Ok(1.0 - dist.prob(action)?)
}

/// Observed error in its un-simplified form:
/// `0.5 * sum_k |p_k - onehot(action)_k|`.
///
/// Kept alongside [`observed_error`] as an independent route to the same
/// value; tests pin their agreement.
pub fn observed_error_l1(dist: &ActionDistribution, action: ObservedAction) -> Result<f64> {
    // Validate the index up front so both routes reject the same inputs.
    dist.prob(action)?;
    let sum: f64 = dist
        .probs()
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let observed = if k == action.index() { 1.0 } else { 0.0 };
            (p - observed).abs()
        })
        .sum();
    Ok(0.5 * sum)
}

/// Expected observed error when the agent actually follows `dist`:
/// `sum_j p_j * (1 - p_j)`.
///
/// Zero for deterministic policies, maximal at `(n-1)/n` for the uniform one.
pub fn expected_error_following(dist: &ActionDistribution) -> f64 {
    dist.probs().iter().map(|&p| p * (1.0 - p)).sum()
}

/// Expected observed error when the agent follows some other, unknown policy,
/// modeled as a uniform action choice: `(n - 1) / n`.
pub fn expected_error_not_following(n: usize) -> Result<f64> {
    if n < 2 {
        return Err(crate::Error::InvalidActionCount(n));
    }
    Ok((n as f64 - 1.0) / n as f64)
}

/// Per-step decay subtracted from the running error:
/// `alpha * e_f + (1 - alpha) * e_nf`.
///
/// `alpha` is the strictness factor; at 1 the decay equals the compliant
/// expectation (most lenient accumulation), at 0 it equals the violating
/// expectation. The result always lies in `[e_f, e_nf]`.
pub fn decay(dist: &ActionDistribution, alpha: f64) -> Result<f64> {
    if !alpha.is_finite() || !(0.0..=1.0).contains(&alpha) {
        return Err(crate::Error::InvalidAlpha(alpha));
    }
    let e_f = expected_error_following(dist);
    let e_nf = expected_error_not_following(dist.len())?;
    Ok(alpha * e_f + (1.0 - alpha) * e_nf)
}
