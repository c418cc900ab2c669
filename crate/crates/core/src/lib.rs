//! Locally differentially private collection of counter data under repeated
//! observation.
//!
//! The crate provides the full client/collector stack for two estimation
//! tasks over private integer counters in `[0, m]` (e.g. daily app usage in
//! seconds):
//!
//! * [`mechanisms`] — stateless single-round randomizers: the one-bit mean
//!   mechanism, the d-bit flip histogram mechanism, and an additive-Laplace
//!   baseline, with their exact response distributions.
//! * [`memoization`] — the repeated-collection layer: alpha-point rounding,
//!   permanently memoized response tables, and a versioned binary format for
//!   client state.
//! * [`perturbation`] — output perturbation over memoized bits and the
//!   privacy accounting it induces (effective per-round budget, multi-counter
//!   composition).
//! * [`collector`] — mergeable aggregates and unbiased estimators with
//!   closed-form high-probability error bounds.
//! * [`patterns`] — behavior-pattern canonicalization and support analysis
//!   for the repeated-collection guarantee.
//! * [`sim`] — a deterministic experiment driver over synthetic populations
//!   and trace files.
//!
//! All randomness flows through explicit seeded generators (see [`seed`]);
//! a fixed seed replays an experiment bit for bit.

mod codec;

pub mod collector;
pub mod error;
pub mod mechanisms;
pub mod memoization;
pub mod patterns;
pub mod perturbation;
pub mod seed;
pub mod sim;

pub use error::{Error, Result};
