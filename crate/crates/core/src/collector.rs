//! Collector-side aggregation and unbiased estimation with
//! Chernoff–Hoeffding error bounds.
//!
//! Aggregates are mergeable monoids: shards built independently and merged
//! yield exactly the aggregate of the union, so a fold over shards is the
//! whole concurrency contract.
//!
//! Estimates are deliberately *not* clipped to the estimand's natural range;
//! the raw debiased values can leave `[0, m]` (or `[0, 1]`) and clipping
//! them would bias the estimator. Callers that want cosmetic clipping apply
//! it downstream.
//!
//! When responses passed through output perturbation, the caller must supply
//! the effective budget from
//! [`crate::perturbation::effective_epsilon`] (mean) or
//! [`crate::perturbation::hist_effective_epsilon`] (histogram) instead of
//! the raw `ε`; the estimators are unbiased only under that pairing.

use crate::codec::{
    Reader, KIND_HIST_AGGREGATE, KIND_MEAN_AGGREGATE, MAX_TABLE_ENTRIES, STATE_VERSION,
};
use crate::error::{Error, Result};
use crate::mechanisms::{BucketSelection, HistConfig, HistResponse, MeanResponse};

/// Default confidence parameter for error bounds.
pub const DEFAULT_DELTA: f64 = 0.05;

/// Running tally of one-bit mean responses.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MeanAggregate {
    n: u64,
    ones: u64,
}

impl MeanAggregate {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, resp: MeanResponse) {
        self.n += 1;
        self.ones += resp.bit as u64;
    }

    /// Componentwise sum; associative and commutative with `new()` as the
    /// identity.
    pub fn merge(self, other: Self) -> Self {
        Self {
            n: self.n + other.n,
            ones: self.ones + other.ones,
        }
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn ones(&self) -> u64 {
        self.ones
    }

    /// Serialize using the shared versioned little-endian conventions.
    pub fn save(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(18);
        out.push(STATE_VERSION);
        out.push(KIND_MEAN_AGGREGATE);
        out.extend_from_slice(&self.n.to_le_bytes());
        out.extend_from_slice(&self.ones.to_le_bytes());
        out
    }

    pub fn load(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_header(KIND_MEAN_AGGREGATE)?;
        let n = r.u64()?;
        let ones = r.u64()?;
        if ones > n {
            return Err(Error::CorruptState("more ones than responses"));
        }
        r.finish()?;
        Ok(Self { n, ones })
    }
}

/// Per-bucket tally of d-bit flip responses: how many bits were received for
/// each bucket and how many of them were 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HistAggregate {
    cfg: HistConfig,
    n: u64,
    received: Vec<u64>,
    ones: Vec<u64>,
}

impl HistAggregate {
    pub fn new(cfg: HistConfig) -> Self {
        Self {
            cfg,
            n: 0,
            received: vec![0; cfg.k()],
            ones: vec![0; cfg.k()],
        }
    }

    pub fn add(&mut self, resp: &HistResponse) {
        self.n += 1;
        for &(bucket, bit) in resp.entries() {
            debug_assert!(bucket >= 1 && bucket <= self.cfg.k());
            self.received[bucket - 1] += 1;
            self.ones[bucket - 1] += bit as u64;
        }
    }

    /// Tally a memoized bit row directly against its bucket sample, skipping
    /// response construction.
    pub fn add_bits(&mut self, buckets: &BucketSelection, bits: &[bool]) {
        debug_assert_eq!(buckets.d(), bits.len());
        self.n += 1;
        for (&bucket, &bit) in buckets.indices().iter().zip(bits) {
            self.received[bucket - 1] += 1;
            self.ones[bucket - 1] += bit as u64;
        }
    }

    /// Componentwise sum; fails if the two shards were collected under
    /// different `(k, d)` configurations.
    pub fn merge(mut self, other: Self) -> Result<Self> {
        if self.cfg != other.cfg {
            return Err(Error::ConfigMismatch);
        }
        self.n += other.n;
        for (a, b) in self.received.iter_mut().zip(&other.received) {
            *a += b;
        }
        for (a, b) in self.ones.iter_mut().zip(&other.ones) {
            *a += b;
        }
        Ok(self)
    }

    pub fn cfg(&self) -> &HistConfig {
        &self.cfg
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn received(&self) -> &[u64] {
        &self.received
    }

    pub fn ones(&self) -> &[u64] {
        &self.ones
    }

    /// Serialize using the shared versioned little-endian conventions.
    pub fn save(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(34 + 16 * self.cfg.k());
        out.push(STATE_VERSION);
        out.push(KIND_HIST_AGGREGATE);
        out.extend_from_slice(&(self.cfg.k() as u64).to_le_bytes());
        out.extend_from_slice(&(self.cfg.d() as u64).to_le_bytes());
        out.extend_from_slice(&self.n.to_le_bytes());
        for &count in self.received.iter().chain(&self.ones) {
            out.extend_from_slice(&count.to_le_bytes());
        }
        out
    }

    pub fn load(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_header(KIND_HIST_AGGREGATE)?;
        let k = r.u64()?;
        let d = r.u64()?;
        if k > MAX_TABLE_ENTRIES {
            return Err(Error::CorruptState("bucket table too large"));
        }
        let cfg = HistConfig::new(k as usize, d as usize)
            .map_err(|_| Error::CorruptState("invalid bucket configuration"))?;
        let n = r.u64()?;
        let received: Vec<u64> = (0..cfg.k()).map(|_| r.u64()).collect::<Result<_>>()?;
        let ones: Vec<u64> = (0..cfg.k()).map(|_| r.u64()).collect::<Result<_>>()?;
        r.finish()?;
        if ones.iter().zip(&received).any(|(o, r)| o > r) {
            return Err(Error::CorruptState("more ones than received bits"));
        }
        if received.iter().sum::<u64>() != n * d {
            return Err(Error::CorruptState("received counts do not sum to n*d"));
        }
        Ok(Self {
            cfg,
            n,
            received,
            ones,
        })
    }
}

/// A point estimate with its high-probability error radius: with probability
/// at least `1 − delta`, the estimand lies within `bound` of `point`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub point: f64,
    pub delta: f64,
    pub bound: f64,
}

/// High-probability radius for the one-bit mean estimator:
///
/// `m/√(2n) · (e^ε+1)/(e^ε−1) · √(ln(2/δ))`
pub fn mean_error_bound(m: u64, n: u64, epsilon: f64, delta: f64) -> f64 {
    let e = epsilon.exp();
    m as f64 / (2.0 * n as f64).sqrt() * (e + 1.0) / (e - 1.0) * (2.0 / delta).ln().sqrt()
}

/// High-probability radius for the maximum bucket error of the d-bit flip
/// histogram estimator:
///
/// `√(5k/(nd)) · (e^(ε/2)+1)/(e^(ε/2)−1) · √(ln(6k/δ))`
pub fn hist_error_bound(k: usize, d: usize, n: u64, epsilon: f64, delta: f64) -> f64 {
    let e_half = (epsilon / 2.0).exp();
    (5.0 * k as f64 / (n as f64 * d as f64)).sqrt() * (e_half + 1.0) / (e_half - 1.0)
        * (6.0 * k as f64 / delta).ln().sqrt()
}

/// Unbiased mean estimate from tallied bits:
///
/// `σ̂ = (m/n) · (ones·(e^ε+1) − n) / (e^ε−1)`
///
/// `epsilon_effective` is the raw budget, or the effective budget when the
/// bits were perturbed.
pub fn mean_estimate(
    agg: &MeanAggregate,
    m: u64,
    epsilon_effective: f64,
    delta: f64,
) -> Result<Estimate> {
    if agg.n == 0 {
        return Err(Error::EmptyAggregate);
    }
    if !epsilon_effective.is_finite() || epsilon_effective <= 0.0 {
        return Err(Error::InvalidEpsilon(epsilon_effective));
    }
    if !delta.is_finite() || delta <= 0.0 || delta >= 1.0 {
        return Err(Error::InvalidDelta(delta));
    }
    let e = epsilon_effective.exp();
    let n = agg.n as f64;
    let point = m as f64 / n * (agg.ones as f64 * (e + 1.0) - n) / (e - 1.0);
    Ok(Estimate {
        point,
        delta,
        bound: mean_error_bound(m, agg.n, epsilon_effective, delta),
    })
}

/// Unbiased per-bucket frequency estimates from tallied bits:
///
/// `ĥ(v) = (k/(nd)) · (ones_v·(e^(ε/2)+1) − received_v) / (e^(ε/2)−1)`
///
/// The normalization uses the fixed `k/(nd)` factor (the expected number of
/// reporters per bucket), not the observed per-bucket count. Every returned
/// estimate carries the shared maximum-error radius.
pub fn hist_estimate(
    agg: &HistAggregate,
    epsilon_effective: f64,
    delta: f64,
) -> Result<Vec<Estimate>> {
    if agg.n == 0 {
        return Err(Error::EmptyAggregate);
    }
    if !epsilon_effective.is_finite() || epsilon_effective <= 0.0 {
        return Err(Error::InvalidEpsilon(epsilon_effective));
    }
    if !delta.is_finite() || delta <= 0.0 || delta >= 1.0 {
        return Err(Error::InvalidDelta(delta));
    }
    let (k, d) = (agg.cfg.k(), agg.cfg.d());
    let e_half = (epsilon_effective / 2.0).exp();
    let scale = k as f64 / (agg.n as f64 * d as f64);
    let bound = hist_error_bound(k, d, agg.n, epsilon_effective, delta);
    Ok(agg
        .received
        .iter()
        .zip(&agg.ones)
        .map(|(&received, &ones)| Estimate {
            point: scale * (ones as f64 * (e_half + 1.0) - received as f64) / (e_half - 1.0),
            delta,
            bound,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::{
        d_bit_flip_buckets, d_bit_flip_respond, one_bit_mean_prob, one_bit_mean_respond,
        BucketValue, CounterValue, MeanConfig, PrivacyParams,
    };
    use crate::seed::stream_rng;
    use proptest::prelude::*;

    fn mean_agg(n: u64, ones: u64) -> MeanAggregate {
        MeanAggregate { n, ones }
    }

    #[test]
    fn all_zero_bits_give_negative_floor() {
        // With no 1-bits the debiased estimate sits below zero: -m/(e-1).
        let est = mean_estimate(&mean_agg(1000, 0), 86400, 1.0, 0.05).unwrap();
        let expect = -86400.0 * 0.581_976_706_869_326_5;
        assert!((est.point - expect).abs() < 1e-6);
    }

    #[test]
    fn centered_count_gives_zero() {
        // eps = ln 3 makes e^eps + 1 = 4; ones = n/4 lands exactly on the
        // centering term.
        let est = mean_estimate(&mean_agg(400, 100), 1000, 3.0f64.ln(), 0.05).unwrap();
        assert_eq!(est.point, 0.0);
    }

    #[test]
    fn mean_bound_reference_value() {
        let b = mean_error_bound(86400, 1_000_000, 1.0, 0.05);
        assert!((b - 253.918_230_726_863_73).abs() < 1e-6, "b = {b}");
    }

    #[test]
    fn hist_bound_reference_value() {
        let b = hist_error_bound(32, 4, 1_000_000, 1.0, 0.05);
        assert!((b - 0.074_185_670_947_258_84).abs() < 1e-9, "b = {b}");
    }

    #[test]
    fn estimate_validation_errors() {
        assert!(matches!(
            mean_estimate(&MeanAggregate::new(), 100, 1.0, 0.05),
            Err(Error::EmptyAggregate)
        ));
        assert!(mean_estimate(&mean_agg(10, 5), 100, 0.0, 0.05).is_err());
        assert!(mean_estimate(&mean_agg(10, 5), 100, 1.0, 1.0).is_err());
        let cfg = HistConfig::new(4, 2).unwrap();
        assert!(matches!(
            hist_estimate(&HistAggregate::new(cfg), 1.0, 0.05),
            Err(Error::EmptyAggregate)
        ));
    }

    #[test]
    fn hist_centering_and_indicator_limit() {
        // Centered: eps/2 = ln 3 puts the non-match rate at 1/4; a bucket
        // receiving 400 bits with 100 ones estimates exactly zero.
        let cfg = HistConfig::new(4, 4).unwrap();
        let mut agg = HistAggregate::new(cfg);
        agg.n = 100;
        agg.received = vec![400; 4];
        agg.ones = vec![100; 4];
        let ests = hist_estimate(&agg, 2.0 * 3.0f64.ln(), 0.05).unwrap();
        for est in &ests {
            assert_eq!(est.point, 0.0);
        }

        // Near-deterministic bits: a single user reporting every bucket with
        // v = 1 yields roughly the indicator of bucket 1.
        let params = PrivacyParams::new(40.0, 0.0).unwrap();
        let sel = d_bit_flip_buckets(0, 0, &cfg);
        let resp = d_bit_flip_respond(
            BucketValue::new(1, &cfg).unwrap(),
            &sel,
            &params,
            &mut stream_rng(1, &[]),
        );
        let mut agg = HistAggregate::new(cfg);
        agg.add(&resp);
        let ests = hist_estimate(&agg, 40.0, 0.05).unwrap();
        assert!((ests[0].point - 1.0).abs() < 1e-6);
        for est in &ests[1..] {
            assert!(est.point.abs() < 1e-6);
        }
    }

    #[test]
    fn merge_is_monoidal() {
        let a = mean_agg(10, 4);
        let b = mean_agg(7, 7);
        assert_eq!(a.merge(MeanAggregate::new()), a);
        assert_eq!(a.merge(b), b.merge(a));

        let cfg = HistConfig::new(8, 2).unwrap();
        let other_cfg = HistConfig::new(8, 3).unwrap();
        assert!(matches!(
            HistAggregate::new(cfg).merge(HistAggregate::new(other_cfg)),
            Err(Error::ConfigMismatch)
        ));
    }

    #[test]
    fn sharded_fold_equals_single_pass() {
        // 1e4 random responses split across 7 shards.
        let cfg = MeanConfig::new(1000, 100).unwrap();
        let params = PrivacyParams::new(1.0, 0.0).unwrap();
        let mut rng = stream_rng(5, &[]);
        let responses: Vec<MeanResponse> = (0..10_000)
            .map(|i| {
                let x = CounterValue::new(i % 1001, &cfg).unwrap();
                one_bit_mean_respond(x, &cfg, &params, &mut rng)
            })
            .collect();

        let mut single = MeanAggregate::new();
        for &r in &responses {
            single.add(r);
        }
        let folded = responses
            .chunks(responses.len() / 7 + 1)
            .map(|chunk| {
                let mut shard = MeanAggregate::new();
                for &r in chunk {
                    shard.add(r);
                }
                shard
            })
            .fold(MeanAggregate::new(), MeanAggregate::merge);
        assert_eq!(single, folded);

        // Estimator linearity: the merged estimate equals the union estimate
        // exactly, bit for bit.
        let est_single = mean_estimate(&single, 1000, 1.0, 0.05).unwrap();
        let est_folded = mean_estimate(&folded, 1000, 1.0, 0.05).unwrap();
        assert_eq!(est_single, est_folded);
    }

    #[test]
    fn hist_received_counts_are_conserved() {
        let cfg = HistConfig::new(16, 4).unwrap();
        let params = PrivacyParams::new(1.0, 0.0).unwrap();
        let mut rng = stream_rng(6, &[]);
        let mut agg = HistAggregate::new(cfg);
        let n = 500u64;
        for user in 0..n {
            let sel = d_bit_flip_buckets(user, 11, &cfg);
            let v = BucketValue::new((user % 16 + 1) as usize, &cfg).unwrap();
            agg.add(&d_bit_flip_respond(v, &sel, &params, &mut rng));
        }
        assert_eq!(agg.received().iter().sum::<u64>(), n * 4);
        assert!(agg.ones().iter().zip(agg.received()).all(|(o, r)| o <= r));
    }

    #[test]
    fn aggregates_round_trip_and_reject_corruption() {
        let agg = mean_agg(1000, 271);
        assert_eq!(MeanAggregate::load(&agg.save()).unwrap(), agg);

        let cfg = HistConfig::new(8, 2).unwrap();
        let params = PrivacyParams::new(1.0, 0.0).unwrap();
        let mut hist = HistAggregate::new(cfg);
        let mut rng = stream_rng(8, &[]);
        for user in 0..100 {
            let sel = d_bit_flip_buckets(user, 3, &cfg);
            let v = BucketValue::new((user % 8 + 1) as usize, &cfg).unwrap();
            hist.add(&d_bit_flip_respond(v, &sel, &params, &mut rng));
        }
        let bytes = hist.save();
        assert_eq!(HistAggregate::load(&bytes).unwrap(), hist);

        assert!(matches!(
            HistAggregate::load(&bytes[..bytes.len() - 2]),
            Err(Error::CorruptState(_))
        ));
        let mut versioned = bytes.clone();
        versioned[0] = 7;
        assert!(matches!(
            HistAggregate::load(&versioned),
            Err(Error::UnsupportedVersion(7))
        ));
        // A mean aggregate is not a histogram aggregate.
        assert!(MeanAggregate::load(&bytes).is_err());
        // Inconsistent tallies are rejected.
        assert!(MeanAggregate::load(&mean_agg(5, 6).save()).is_err());
    }

    #[test]
    fn mean_estimator_is_unbiased() {
        // 2000 independent rounds at a fixed small population; the average
        // estimate stays within 4 standard errors of the true mean.
        let cfg = MeanConfig::new(1000, 1000).unwrap();
        let params = PrivacyParams::new(1.0, 0.0).unwrap();
        let values: Vec<u64> = (0..500).map(|i| (i * 977) % 1001).collect();
        let sigma = values.iter().sum::<u64>() as f64 / values.len() as f64;
        let mut rng = stream_rng(7, &[]);
        let rounds = 2000;
        let points: Vec<f64> = (0..rounds)
            .map(|_| {
                let mut agg = MeanAggregate::new();
                for &v in &values {
                    let x = CounterValue::new(v, &cfg).unwrap();
                    agg.add(one_bit_mean_respond(x, &cfg, &params, &mut rng));
                }
                mean_estimate(&agg, 1000, 1.0, 0.05).unwrap().point
            })
            .collect();
        let mean = points.iter().sum::<f64>() / rounds as f64;
        let var = points.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (rounds as f64 - 1.0);
        let se = (var / rounds as f64).sqrt();
        assert!((mean - sigma).abs() <= 4.0 * se, "mean {mean} vs {sigma}");
    }

    #[test]
    fn estimator_spot_check_against_response_probability() {
        // At a fixed x the expected estimate recovers x through the closed
        // form: E[point] = m*(p*(e+1)-1)/(e-1) = x.
        let cfg = MeanConfig::new(864, 864).unwrap();
        let params = PrivacyParams::new(2.0, 0.0).unwrap();
        let x = CounterValue::new(300, &cfg).unwrap();
        let p = one_bit_mean_prob(x, &cfg, &params);
        let e = 2.0f64.exp();
        let expect = 864.0 * (p * (e + 1.0) - 1.0) / (e - 1.0);
        assert!((expect - 300.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn merge_matches_componentwise_sum(
            n1 in 0u64..1000, ones_frac1 in 0.0f64..=1.0,
            n2 in 0u64..1000, ones_frac2 in 0.0f64..=1.0,
        ) {
            let a = mean_agg(n1, (n1 as f64 * ones_frac1) as u64);
            let b = mean_agg(n2, (n2 as f64 * ones_frac2) as u64);
            let m = a.merge(b);
            prop_assert_eq!(m.n(), a.n() + b.n());
            prop_assert_eq!(m.ones(), a.ones() + b.ones());
        }
    }
}
