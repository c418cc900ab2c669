//! Output perturbation over memoized responses, and the accounting formulas
//! it induces.
//!
//! Memoization leaks the *timing* of behavior changes: when a memoized bit
//! stream flips, the collector learns with certainty that the underlying
//! value moved. Output perturbation flips each emitted bit independently
//! with probability `gamma` (fresh randomness per round, on top of the
//! memoized bit, never mutating the table). Two memoized streams within
//! Hamming distance `delta` then produce any observed output sequence with
//! probability ratio at least `gamma^delta`, hiding the exact transition
//! round.
//!
//! Perturbing a one-bit-mean response is distributionally identical to
//! running the mechanism with a smaller budget: the flipped bit is 1 with
//! probability `(1-2γ)·p + γ`, which is exactly the one-bit law at
//!
//! `ε′ = ln( ((1−2γ)·e^ε/(e^ε+1) + γ) / ((1−2γ)·1/(e^ε+1) + γ) )`
//!
//! so a collector working over perturbed bits must evaluate the estimator at
//! `ε′` to stay unbiased. [`EffectiveBudget`] packages that pairing plus the
//! multi-counter composition bound `τ′ = τ + e^τ − 1` that applies when one
//! budget-τ mechanism simultaneously collects counters whose sum is bounded
//! by the shared range.

use rand::Rng;

use crate::error::{Error, Result};
use crate::mechanisms::PrivacyParams;

/// Flip `bit` with probability `gamma`; identity when `gamma = 0`. Fresh
/// randomness per invocation — unlike memoization, two calls at the same
/// round index may differ.
pub fn perturb_bit<R: Rng + ?Sized>(bit: bool, gamma: f64, rng: &mut R) -> Result<bool> {
    if !gamma.is_finite() || !(0.0..0.5).contains(&gamma) {
        return Err(Error::InvalidGamma(gamma));
    }
    if gamma > 0.0 && rng.random_bool(gamma) {
        Ok(!bit)
    } else {
        Ok(bit)
    }
}

/// The effective per-round budget of the one-bit mean mechanism followed by
/// output perturbation with flip probability `gamma`.
///
/// Evaluates the closed form above; `gamma = 0` returns `epsilon` exactly.
/// Strictly decreasing in `gamma` (toward 0 as `gamma → 0.5`) and strictly
/// increasing in `epsilon`.
pub fn effective_epsilon(epsilon: f64, gamma: f64) -> Result<f64> {
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(Error::InvalidEpsilon(epsilon));
    }
    if !gamma.is_finite() || !(0.0..0.5).contains(&gamma) {
        return Err(Error::InvalidGamma(gamma));
    }
    if gamma == 0.0 {
        return Ok(epsilon);
    }
    // e^eps/(e^eps+1) in the overflow-free form.
    let high = (1.0 - 2.0 * gamma) / (1.0 + (-epsilon).exp()) + gamma;
    let low = (1.0 - 2.0 * gamma) / (epsilon.exp() + 1.0) + gamma;
    Ok((high / low).ln())
}

/// Effective budget for the d-bit flip mechanism followed by per-bit output
/// perturbation. Each histogram bit carries exponent `ε/2`, so the flip acts
/// on that two-point law: the result is `2 · effective_epsilon(ε/2, γ)`, to
/// be fed to the histogram estimator in place of `ε`.
pub fn hist_effective_epsilon(epsilon: f64, gamma: f64) -> Result<f64> {
    Ok(2.0 * effective_epsilon(epsilon / 2.0, gamma)?)
}

/// Budget consumed when a budget-`tau` one-bit mechanism simultaneously
/// collects several counters whose sum stays within the shared range:
/// `τ′ = τ + e^τ − 1`.
pub fn multiapp_epsilon(tau: f64) -> Result<f64> {
    if !tau.is_finite() || tau <= 0.0 {
        return Err(Error::InvalidTau(tau));
    }
    Ok(tau + tau.exp() - 1.0)
}

/// Lower bound `γ^δ` on the output-sequence probability ratio between two
/// users whose memoized streams differ in at most `delta` positions.
///
/// Undefined for `gamma = 0` with `delta > 0` (an unperturbed stream exposes
/// the difference with certainty).
pub fn hamming_ratio_bound(delta: u32, gamma: f64) -> Result<f64> {
    if !gamma.is_finite() || !(0.0..0.5).contains(&gamma) {
        return Err(Error::InvalidGamma(gamma));
    }
    if gamma == 0.0 && delta > 0 {
        return Err(Error::UndefinedBound);
    }
    Ok(gamma.powi(delta as i32))
}

/// Derived budgets for one privacy configuration: the per-round effective
/// `ε′` under output perturbation, and the multi-counter composition `τ′`
/// evaluated at `ε′`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EffectiveBudget {
    epsilon_prime: f64,
    epsilon_multiapp: f64,
}

impl EffectiveBudget {
    pub fn for_params(params: &PrivacyParams) -> Self {
        let epsilon_prime =
            effective_epsilon(params.epsilon(), params.gamma()).expect("validated parameters");
        let epsilon_multiapp = multiapp_epsilon(epsilon_prime).expect("epsilon_prime > 0");
        Self {
            epsilon_prime,
            epsilon_multiapp,
        }
    }

    pub fn epsilon_prime(&self) -> f64 {
        self.epsilon_prime
    }

    pub fn epsilon_multiapp(&self) -> f64 {
        self.epsilon_multiapp
    }
}
