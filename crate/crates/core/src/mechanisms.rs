//! Stateless single-round local randomizers for mean and histogram
//! collection, together with their exact response distributions.
//!
//! Two mechanisms are provided:
//!
//! * **one-bit mean**: a user holding counter value `x ∈ [0, m]` sends a
//!   single bit that is 1 with probability
//!   `1/(e^ε+1) + (x/m)·(e^ε−1)/(e^ε+1)`. The likelihood of either output
//!   changes by at most `e^ε` across any two inputs, so one round is ε-LDP.
//! * **d-bit flip**: a user holding bucket value `v ∈ [k]` reports, for `d`
//!   publicly sampled buckets, a noisy membership bit per bucket: 1 with
//!   probability `e^(ε/2)/(e^(ε/2)+1)` when the bucket equals `v`, else
//!   `1/(e^(ε/2)+1)`. One round is ε-LDP for any `d`.
//!
//! An additive-Laplace randomizer is included as the classical baseline for
//! mean estimation.
//!
//! All operations are pure given an explicit generator; callers that need
//! replay derive generators through [`crate::seed`].

use rand::distr::{Bernoulli, Distribution};
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

/// Stream tag for public-coin bucket sampling, shared by client and
/// collector so both derive the same bucket list.
const BUCKET_STREAM: u64 = 0xb0c4;

/// Privacy contract consumed by every mechanism invocation.
///
/// `epsilon` is the per-round LDP budget. `gamma` is the output-perturbation
/// flip probability applied on top of memoized responses (0 disables it);
/// it is carried here so client state can persist both knobs together, but
/// the single-round randomizers ignore it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrivacyParams {
    epsilon: f64,
    gamma: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, gamma: f64) -> Result<Self> {
        if !epsilon.is_finite() || epsilon <= 0.0 {
            return Err(Error::InvalidEpsilon(epsilon));
        }
        if !gamma.is_finite() || !(0.0..0.5).contains(&gamma) {
            return Err(Error::InvalidGamma(gamma));
        }
        Ok(Self { epsilon, gamma })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }
}

/// Counter range and rounding granularity for mean collection.
///
/// Counters take integer values in `[0, m]` (e.g. seconds of daily usage).
/// `s` is the discretization granularity used by alpha-point rounding and
/// must divide `m`, so the rounding grid `{0, s, 2s, …, m}` has `m/s + 1`
/// points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeanConfig {
    m: u64,
    s: u64,
}

impl MeanConfig {
    pub fn new(m: u64, s: u64) -> Result<Self> {
        if m == 0 || s == 0 || s > m || !m.is_multiple_of(s) {
            return Err(Error::InvalidGranularity { m, s });
        }
        Ok(Self { m, s })
    }

    pub fn m(&self) -> u64 {
        self.m
    }

    pub fn s(&self) -> u64 {
        self.s
    }

    /// Number of grid points, `m/s + 1`.
    pub fn grid_len(&self) -> u64 {
        self.m / self.s + 1
    }
}

/// Bucket count `k` and per-user report width `d` for histogram collection.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistConfig {
    k: usize,
    d: usize,
}

impl HistConfig {
    pub fn new(k: usize, d: usize) -> Result<Self> {
        if k == 0 || d == 0 || d > k {
            return Err(Error::InvalidBucketConfig { k, d });
        }
        Ok(Self { k, d })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }
}

/// An integer counter value validated against a [`MeanConfig`] range.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CounterValue(u64);

impl CounterValue {
    pub fn new(value: u64, cfg: &MeanConfig) -> Result<Self> {
        if value > cfg.m {
            return Err(Error::CounterOutOfRange { value, m: cfg.m });
        }
        Ok(Self(value))
    }

    pub fn get(&self) -> u64 {
        self.0
    }
}

/// A 1-based bucket index validated against a [`HistConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BucketValue(usize);

impl BucketValue {
    pub fn new(bucket: usize, cfg: &HistConfig) -> Result<Self> {
        if bucket == 0 || bucket > cfg.k {
            return Err(Error::BucketOutOfRange { bucket, k: cfg.k });
        }
        Ok(Self(bucket))
    }

    pub fn get(&self) -> usize {
        self.0
    }
}

/// The single bit a user sends per mean-collection round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeanResponse {
    pub bit: bool,
}

/// The `d` (bucket index, bit) pairs a user sends per histogram round.
///
/// Bucket indices are pairwise distinct. Under the public-coin model the
/// indices are derivable by the collector, so a wire format may drop them;
/// they are kept here so aggregation needs no side channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistResponse {
    entries: Vec<(usize, bool)>,
}

impl HistResponse {
    pub fn entries(&self) -> &[(usize, bool)] {
        &self.entries
    }

    // Callers must supply distinct bucket indices.
    pub(crate) fn from_entries(entries: Vec<(usize, bool)>) -> Self {
        Self { entries }
    }
}

/// A user's public-coin bucket sample: `d` distinct 1-based indices in `[k]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketSelection {
    indices: Vec<usize>,
    k: usize,
}

impl BucketSelection {
    // Callers must supply distinct indices in [1, k].
    pub(crate) fn from_raw(indices: Vec<usize>, k: usize) -> Self {
        Self { indices, k }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn d(&self) -> usize {
        self.indices.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }
}

/// Probability that the one-bit mean mechanism emits 1 for value `x`:
///
/// `Pr[bit = 1] = 1/(e^ε+1) + (x/m)·(e^ε−1)/(e^ε+1)`
///
/// The result lies in `[1/(e^ε+1), e^ε/(e^ε+1)]`.
pub fn one_bit_mean_prob(x: CounterValue, cfg: &MeanConfig, params: &PrivacyParams) -> f64 {
    debug_assert!(x.get() <= cfg.m);
    // (e^eps-1)/(e^eps+1) written as 1 - 2/(e^eps+1) so huge eps saturates
    // cleanly instead of overflowing to inf/inf.
    let low = 1.0 / (params.epsilon.exp() + 1.0);
    low + (x.get() as f64 / cfg.m as f64) * (1.0 - 2.0 * low)
}

/// Draw one response bit from the one-bit mean mechanism.
pub fn one_bit_mean_respond<R: Rng + ?Sized>(
    x: CounterValue,
    cfg: &MeanConfig,
    params: &PrivacyParams,
    rng: &mut R,
) -> MeanResponse {
    MeanResponse {
        bit: rng.random_bool(one_bit_mean_prob(x, cfg, params)),
    }
}

/// Sample the `d` distinct buckets user `user_id` reports on, using public
/// coins: both client and collector derive the same list from
/// `(public_seed, user_id)`, uniformly over d-subsets of `[k]`.
pub fn d_bit_flip_buckets(user_id: u64, public_seed: u64, cfg: &HistConfig) -> BucketSelection {
    let mut rng = seed::stream_rng(public_seed, &[BUCKET_STREAM, user_id]);
    let indices = rand::seq::index::sample(&mut rng, cfg.k, cfg.d)
        .iter()
        .map(|j| j + 1)
        .collect();
    BucketSelection { indices, k: cfg.k }
}

/// Per-bucket response-bit probability of the d-bit flip mechanism:
/// `e^(ε/2)/(e^(ε/2)+1)` for the user's own bucket, `1/(e^(ε/2)+1)` otherwise.
pub fn d_bit_flip_prob(matches: bool, params: &PrivacyParams) -> f64 {
    if matches {
        // e^(eps/2)/(e^(eps/2)+1), in the overflow-free form.
        1.0 / (1.0 + (-params.epsilon / 2.0).exp())
    } else {
        1.0 / ((params.epsilon / 2.0).exp() + 1.0)
    }
}

/// Draw one d-bit flip response for bucket value `v` over the given bucket
/// sample. Bits are mutually independent.
pub fn d_bit_flip_respond<R: Rng + ?Sized>(
    v: BucketValue,
    buckets: &BucketSelection,
    params: &PrivacyParams,
    rng: &mut R,
) -> HistResponse {
    debug_assert!(v.get() <= buckets.k);
    let match_dist = Bernoulli::new(d_bit_flip_prob(true, params)).expect("probability in (0,1)");
    let other_dist = Bernoulli::new(d_bit_flip_prob(false, params)).expect("probability in (0,1)");
    let entries = buckets
        .indices
        .iter()
        .map(|&j| {
            let dist = if j == v.get() {
                &match_dist
            } else {
                &other_dist
            };
            (j, dist.sample(rng))
        })
        .collect();
    HistResponse { entries }
}

/// Additive-Laplace baseline for mean collection: returns
/// `x + Laplace(scale = m/ε)`. The output is an unbounded real; no clamping
/// is applied, so averaging stays unbiased.
pub fn laplace_mean_respond<R: Rng + ?Sized>(
    x: CounterValue,
    cfg: &MeanConfig,
    params: &PrivacyParams,
    rng: &mut R,
) -> f64 {
    let scale = cfg.m as f64 / params.epsilon;
    // Laplace = Exp(1) * scale with a random sign; 1-u is in (0, 1].
    let magnitude = -(1.0 - rng.random::<f64>()).ln();
    let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
    x.get() as f64 + sign * scale * magnitude
}
