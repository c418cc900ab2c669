//! Per-user stateful layer: alpha-point rounding, permanent memoization of
//! randomized responses, and client-state persistence.
//!
//! Repeated collection with fresh randomness leaks: a collector averaging a
//! user's responses over many rounds recovers the underlying value. The
//! defense is to fix the randomness once. A mean-collection client
//!
//! 1. picks a uniform offset `alpha ∈ {0, …, s−1}` at setup,
//! 2. draws one one-bit response per grid point `{0, s, 2s, …, m}` and
//!    memoizes the whole table,
//! 3. on every collection request rounds the current value to a neighboring
//!    grid point using `alpha` (down iff `x + alpha < R` for the segment
//!    `[L, R)` containing `x`) and replays the memoized bit for that point.
//!
//! The offset makes rounding unbiased — averaged over `alpha`, the rounded
//! value equals `x` — so the response-bit law through rounding and
//! memoization is identical to the single-round law at `x`, for every
//! granularity `s`. Users whose values stay in one segment keep emitting one
//! fixed bit, which is what conceals small day-to-day changes.
//!
//! Histogram clients memoize one d-bit-flip response per bucket (no rounding
//! step: bucketization already discretizes); with `d` bits, many buckets
//! share each memoized vector, which is the blending that protects repeated
//! reports.
//!
//! States are write-once: after initialization they are immutable, may be
//! shared read-only across threads, and re-randomization requires an
//! explicit new `init` call.

use rand::Rng;

use crate::codec::{
    pack_bits, Reader, KIND_HIST_STATE, KIND_MEAN_STATE, MAX_TABLE_ENTRIES, STATE_VERSION,
};
use crate::error::{Error, Result};
use crate::mechanisms::{
    d_bit_flip_buckets, d_bit_flip_respond, one_bit_mean_respond, BucketSelection, BucketValue,
    CounterValue, HistConfig, HistResponse, MeanConfig, MeanResponse, PrivacyParams,
};

/// A value on the rounding grid: a multiple of `s` in `[0, m]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridValue(u64);

impl GridValue {
    pub fn new(value: u64, cfg: &MeanConfig) -> Result<Self> {
        if value > cfg.m() || !value.is_multiple_of(cfg.s()) {
            return Err(Error::OffGrid {
                value,
                s: cfg.s(),
                m: cfg.m(),
            });
        }
        Ok(Self(value))
    }

    pub fn get(&self) -> u64 {
        self.0
    }
}

/// Round `x` to a neighboring grid point using the fixed per-user offset:
/// with `L = s·⌊x/s⌋`, the result is `L` if `x + alpha < L + s`, else `L + s`.
///
/// Values already on the grid (including `x = m`) map to themselves for every
/// `alpha`, so no value ever rounds above `m`. Enumerating all `s` offsets,
/// `x` rounds up exactly `x − L` times out of `s`, which makes the rounded
/// value an unbiased estimate of `x`.
pub fn alpha_round(x: CounterValue, alpha: u64, cfg: &MeanConfig) -> GridValue {
    debug_assert!(alpha < cfg.s());
    let s = cfg.s();
    let lower = x.get() / s * s;
    let rounds_down = (x.get() as u128 + alpha as u128) < (lower as u128 + s as u128);
    GridValue(if rounds_down { lower } else { lower + s })
}

/// Mean-collection client state: the rounding offset plus the memoized
/// one-bit response for every grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanClientState {
    cfg: MeanConfig,
    params: PrivacyParams,
    alpha: u64,
    grid_bits: Vec<bool>,
}

impl MeanClientState {
    /// Draw the offset and the full response table. The table has exactly
    /// `m/s + 1` entries, one per grid point, drawn in ascending grid order.
    pub fn init<R: Rng + ?Sized>(cfg: MeanConfig, params: PrivacyParams, rng: &mut R) -> Self {
        let alpha = rng.random_range(0..cfg.s());
        let grid_bits = (0..cfg.grid_len())
            .map(|l| {
                let x = CounterValue::new(l * cfg.s(), &cfg).expect("grid point within range");
                one_bit_mean_respond(x, &cfg, &params, rng).bit
            })
            .collect();
        Self {
            cfg,
            params,
            alpha,
            grid_bits,
        }
    }

    pub fn cfg(&self) -> &MeanConfig {
        &self.cfg
    }

    pub fn params(&self) -> &PrivacyParams {
        &self.params
    }

    pub fn alpha(&self) -> u64 {
        self.alpha
    }

    /// The memoized bit for a grid point.
    pub fn grid_bit(&self, g: GridValue) -> bool {
        self.grid_bits[(g.get() / self.cfg.s()) as usize]
    }

    /// Respond to a collection request: replay the memoized bit for the
    /// rounded value. Identical inputs always produce identical responses.
    pub fn respond(&self, x: CounterValue) -> MeanResponse {
        let y = alpha_round(x, self.alpha, &self.cfg);
        MeanResponse {
            bit: self.grid_bit(y),
        }
    }

    /// Serialize to the versioned little-endian byte format.
    pub fn save(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(42 + self.grid_bits.len() / 8 + 1);
        out.push(STATE_VERSION);
        out.push(KIND_MEAN_STATE);
        out.extend_from_slice(&self.params.epsilon().to_le_bytes());
        out.extend_from_slice(&self.params.gamma().to_le_bytes());
        out.extend_from_slice(&self.cfg.m().to_le_bytes());
        out.extend_from_slice(&self.cfg.s().to_le_bytes());
        out.extend_from_slice(&self.alpha.to_le_bytes());
        pack_bits(&self.grid_bits, &mut out);
        out
    }

    /// Deserialize; the stream must be exactly one saved state.
    pub fn load(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_header(KIND_MEAN_STATE)?;
        let params = PrivacyParams::new(r.f64()?, r.f64()?)
            .map_err(|_| Error::CorruptState("privacy parameters out of range"))?;
        let cfg = MeanConfig::new(r.u64()?, r.u64()?)
            .map_err(|_| Error::CorruptState("invalid counter configuration"))?;
        let alpha = r.u64()?;
        if alpha >= cfg.s() {
            return Err(Error::CorruptState("offset exceeds granularity"));
        }
        if cfg.grid_len() > MAX_TABLE_ENTRIES {
            return Err(Error::CorruptState("memoization table too large"));
        }
        let grid_bits = r.bits(cfg.grid_len() as usize)?;
        r.finish()?;
        Ok(Self {
            cfg,
            params,
            alpha,
            grid_bits,
        })
    }
}

/// Histogram-collection client state: the public-coin bucket sample plus one
/// memoized d-bit response vector per bucket value.
#[derive(Debug, Clone, PartialEq)]
pub struct HistClientState {
    cfg: HistConfig,
    params: PrivacyParams,
    buckets: BucketSelection,
    // k rows of d bits, row v-1 holding the memoized vector for bucket v.
    table: Vec<bool>,
}

impl HistClientState {
    /// Run the d-bit flip mechanism once per bucket value and memoize all k
    /// response vectors over the fixed bucket sample.
    pub fn init<R: Rng + ?Sized>(
        cfg: HistConfig,
        params: PrivacyParams,
        user_id: u64,
        public_seed: u64,
        rng: &mut R,
    ) -> Self {
        let buckets = d_bit_flip_buckets(user_id, public_seed, &cfg);
        let mut table = Vec::with_capacity(cfg.k() * cfg.d());
        for v in 1..=cfg.k() {
            let value = BucketValue::new(v, &cfg).expect("bucket within range");
            let resp = d_bit_flip_respond(value, &buckets, &params, rng);
            table.extend(resp.entries().iter().map(|&(_, bit)| bit));
        }
        Self {
            cfg,
            params,
            buckets,
            table,
        }
    }

    pub fn cfg(&self) -> &HistConfig {
        &self.cfg
    }

    pub fn params(&self) -> &PrivacyParams {
        &self.params
    }

    pub fn buckets(&self) -> &BucketSelection {
        &self.buckets
    }

    /// The memoized d-bit vector for bucket value `v`.
    pub fn memoized_bits(&self, v: BucketValue) -> &[bool] {
        let d = self.cfg.d();
        let row = (v.get() - 1) * d;
        &self.table[row..row + d]
    }

    /// Respond to a collection request: always the same vector for the same
    /// bucket value.
    pub fn respond(&self, v: BucketValue) -> HistResponse {
        let bits = self.memoized_bits(v);
        let entries = self
            .buckets
            .indices()
            .iter()
            .copied()
            .zip(bits.iter().copied())
            .collect();
        HistResponse::from_entries(entries)
    }

    /// Serialize to the versioned little-endian byte format.
    pub fn save(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(34 + 8 * self.cfg.d() + self.table.len() / 8 + 1);
        out.push(STATE_VERSION);
        out.push(KIND_HIST_STATE);
        out.extend_from_slice(&self.params.epsilon().to_le_bytes());
        out.extend_from_slice(&self.params.gamma().to_le_bytes());
        out.extend_from_slice(&(self.cfg.k() as u64).to_le_bytes());
        out.extend_from_slice(&(self.cfg.d() as u64).to_le_bytes());
        for &j in self.buckets.indices() {
            out.extend_from_slice(&(j as u64).to_le_bytes());
        }
        pack_bits(&self.table, &mut out);
        out
    }

    /// Deserialize; the stream must be exactly one saved state.
    pub fn load(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.expect_header(KIND_HIST_STATE)?;
        let params = PrivacyParams::new(r.f64()?, r.f64()?)
            .map_err(|_| Error::CorruptState("privacy parameters out of range"))?;
        let k = r.u64()?;
        let d = r.u64()?;
        if k > MAX_TABLE_ENTRIES || d > MAX_TABLE_ENTRIES || k.saturating_mul(d) > MAX_TABLE_ENTRIES
        {
            return Err(Error::CorruptState("memoization table too large"));
        }
        let cfg = HistConfig::new(k as usize, d as usize)
            .map_err(|_| Error::CorruptState("invalid bucket configuration"))?;
        let mut seen = vec![false; cfg.k() + 1];
        let mut indices = Vec::with_capacity(cfg.d());
        for _ in 0..cfg.d() {
            let j = r.u64()?;
            if j == 0 || j > k || seen[j as usize] {
                return Err(Error::CorruptState("bucket sample not distinct in range"));
            }
            seen[j as usize] = true;
            indices.push(j as usize);
        }
        let table = r.bits(cfg.k() * cfg.d())?;
        r.finish()?;
        Ok(Self {
            cfg,
            params,
            buckets: BucketSelection::from_raw(indices, cfg.k()),
            table,
        })
    }
}
