//! Experiment driver: synthetic populations, trace ingestion, repeated
//! collection through the full client stack, and error measurement.
//!
//! An experiment fixes a population of `n` users with counter sequences
//! `x_i(1..T)`, then repeats `trials` independent collections: each trial
//! initializes fresh client states, runs the `T` rounds through
//! memoization (plus output perturbation when `γ > 0`), estimates the
//! per-round mean or histogram, and records the absolute estimation error
//! averaged over rounds. Reported is the mean of that error over trials with
//! one sample standard deviation.
//!
//! Everything is replayable: populations, client states and perturbation all
//! draw from streams derived from `(plan.seed, trial, user)`, so a plan run
//! twice produces bit-identical results, and trials can be distributed
//! across workers by index without changing them.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::collector::{hist_estimate, mean_estimate, HistAggregate, MeanAggregate};
use crate::error::{Error, Result};
use crate::mechanisms::{
    laplace_mean_respond, BucketValue, CounterValue, HistConfig, MeanConfig, MeanResponse,
    PrivacyParams,
};
use crate::memoization::{alpha_round, GridValue, HistClientState, MeanClientState};
use crate::perturbation::{effective_epsilon, hist_effective_epsilon, perturb_bit};
use crate::seed::{child_seed, stream_rng};

/// Stream tags; fixed so that results are stable across releases.
const POPULATION_STREAM: u64 = 1;
const TRIAL_STREAM: u64 = 2;
const PUBLIC_COIN_STREAM: u64 = 3;
const ALPHA_STREAM: u64 = 4;

/// How per-user counter values are produced.
///
/// Synthetic kinds draw one value per user and hold it constant across
/// rounds; time-varying behavior comes from trace replay or the age scenario
/// (`x_i(t) = min(start_i + t, m)`).
#[derive(Debug, Clone, PartialEq)]
pub enum PopulationKind {
    Constant(u64),
    Uniform {
        lo: u64,
        hi: u64,
    },
    TruncatedNormal {
        mean: f64,
        std_dev: f64,
        lo: u64,
        hi: u64,
    },
    Trace(PathBuf),
    AgeInDays {
        lo: u64,
        hi: u64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    pub kind: PopulationKind,
    /// User count; ignored for [`PopulationKind::Trace`] (taken from the file).
    pub n: usize,
    /// Round count; ignored for [`PopulationKind::Trace`].
    pub t: usize,
}

/// Materialized per-user value sequences, all within `[0, m]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Population {
    n: usize,
    t: usize,
    values: Vec<u64>, // row-major, user-major: values[user * t + round - 1]
}

impl Population {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn t(&self) -> usize {
        self.t
    }

    /// Value of `user` at 1-based `round`.
    pub fn x(&self, user: usize, round: usize) -> u64 {
        self.values[user * self.t + round - 1]
    }

    /// True population mean at 1-based `round`.
    pub fn round_mean(&self, round: usize) -> f64 {
        let sum: u128 = (0..self.n).map(|i| self.x(i, round) as u128).sum();
        sum as f64 / self.n as f64
    }
}

/// Generate a population with values clipped to `[0, m]` by saturation.
pub fn generate_population(spec: &PopulationSpec, m: u64, seed: u64) -> Result<Population> {
    if let PopulationKind::Trace(path) = &spec.kind {
        return read_trace(path, m);
    }
    if spec.n == 0 || spec.t == 0 {
        return Err(Error::InvalidPlan(format!(
            "population requires n >= 1 and t >= 1, got n={}, t={}",
            spec.n, spec.t
        )));
    }
    let (n, t) = (spec.n, spec.t);
    let mut rng = stream_rng(seed, &[POPULATION_STREAM]);
    let mut values = Vec::with_capacity(n * t);
    match spec.kind {
        PopulationKind::Constant(v) => {
            if v > m {
                return Err(Error::CounterOutOfRange { value: v, m });
            }
            values.resize(n * t, v);
        }
        PopulationKind::Uniform { lo, hi } => {
            if lo > hi {
                return Err(Error::InvalidPlan(format!(
                    "uniform population requires lo <= hi, got lo={lo}, hi={hi}"
                )));
            }
            for _ in 0..n {
                let v = rng.random_range(lo..=hi).min(m);
                values.extend(std::iter::repeat_n(v, t));
            }
        }
        PopulationKind::TruncatedNormal {
            mean,
            std_dev,
            lo,
            hi,
        } => {
            if lo > hi {
                return Err(Error::InvalidPlan(format!(
                    "truncated normal population requires lo <= hi, got lo={lo}, hi={hi}"
                )));
            }
            let normal = Normal::new(mean, std_dev).map_err(|e| {
                Error::InvalidPlan(format!(
                    "invalid normal parameters ({mean}, {std_dev}): {e}"
                ))
            })?;
            for _ in 0..n {
                let raw = normal.sample(&mut rng);
                let v = raw.clamp(lo as f64, hi as f64).round() as u64;
                values.extend(std::iter::repeat_n(v.min(m), t));
            }
        }
        PopulationKind::AgeInDays { lo, hi } => {
            if lo > hi {
                return Err(Error::InvalidPlan(format!(
                    "age population requires lo <= hi, got lo={lo}, hi={hi}"
                )));
            }
            for _ in 0..n {
                let start = rng.random_range(lo..=hi).min(m);
                for round in 1..=t {
                    values.push(start.saturating_add(round as u64).min(m));
                }
            }
        }
        PopulationKind::Trace(_) => unreachable!("handled above"),
    }
    Ok(Population { n, t, values })
}

/// Read a trace file: CSV with header `user_id,t,value_seconds` and one row
/// per (user, round). Every user must cover rounds `1..=T` exactly once;
/// values must be integers in `[0, m]`.
pub fn read_trace(path: &Path, m: u64) -> Result<Population> {
    parse_trace(BufReader::new(File::open(path)?), m)
}

fn parse_trace<R: BufRead>(reader: R, m: u64) -> Result<Population> {
    let mut users: Vec<String> = Vec::new();
    let mut index: std::collections::HashMap<String, usize> = std::collections::HashMap::new();
    let mut rows: Vec<Vec<Option<u64>>> = Vec::new();
    let bad = |line: usize, message: String| Error::TraceParse { line, message };

    let mut lines = reader.lines();
    match lines.next() {
        Some(header) => {
            let header = header?;
            if header.trim_end_matches('\r') != "user_id,t,value_seconds" {
                return Err(bad(
                    1,
                    format!("expected header 'user_id,t,value_seconds', got '{header}'"),
                ));
            }
        }
        None => return Err(bad(1, "empty trace file".into())),
    }

    for (idx, line) in lines.enumerate() {
        let line_no = idx + 2;
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(bad(
                line_no,
                format!("expected 3 comma-separated fields, got {}", fields.len()),
            ));
        }
        if fields[0].is_empty() {
            return Err(bad(line_no, "empty user_id".into()));
        }
        let round: usize = fields[1]
            .parse()
            .map_err(|_| bad(line_no, format!("invalid round index '{}'", fields[1])))?;
        if round == 0 {
            return Err(bad(line_no, "round index must be >= 1".into()));
        }
        let value: u64 = fields[2]
            .parse()
            .map_err(|_| bad(line_no, format!("invalid counter value '{}'", fields[2])))?;
        if value > m {
            return Err(bad(line_no, format!("counter value {value} exceeds m={m}")));
        }
        let user = *index.entry(fields[0].to_string()).or_insert_with(|| {
            users.push(fields[0].to_string());
            rows.push(Vec::new());
            users.len() - 1
        });
        if rows[user].len() < round {
            rows[user].resize(round, None);
        }
        if rows[user][round - 1].replace(value).is_some() {
            return Err(bad(
                line_no,
                format!("duplicate row for user '{}' round {round}", fields[0]),
            ));
        }
    }

    if users.is_empty() {
        return Err(Error::InvalidPlan("trace contains no data rows".into()));
    }
    let t = rows.iter().map(Vec::len).max().unwrap();
    let mut values = Vec::with_capacity(users.len() * t);
    for (user, row) in rows.iter().enumerate() {
        for round in 1..=t {
            match row.get(round - 1).copied().flatten() {
                Some(v) => values.push(v),
                None => {
                    return Err(Error::InvalidPlan(format!(
                        "trace is missing round {round} for user '{}'",
                        users[user]
                    )))
                }
            }
        }
    }
    Ok(Population {
        n: users.len(),
        t,
        values,
    })
}

/// Map a counter value to its 1-based bucket among `k` even-width buckets
/// over `[0, m]` (the top boundary folds into bucket `k`).
pub fn bucket_of(x: u64, m: u64, k: usize) -> usize {
    ((x as u128 * k as u128 / m as u128) as usize + 1).min(k)
}

/// Per-user rounded sequences for pattern analysis: draws each user's
/// rounding offset from `(seed, user)` and rounds the whole sequence.
pub fn rounded_sequences(
    pop: &Population,
    cfg: &MeanConfig,
    seed: u64,
) -> Result<Vec<Vec<GridValue>>> {
    (0..pop.n())
        .map(|user| {
            let alpha = stream_rng(seed, &[ALPHA_STREAM, user as u64]).random_range(0..cfg.s());
            (1..=pop.t())
                .map(|round| {
                    let x = CounterValue::new(pop.x(user, round), cfg)?;
                    Ok(alpha_round(x, alpha, cfg))
                })
                .collect()
        })
        .collect()
}

/// Which randomizer an experiment exercises.
#[derive(Debug, Clone, PartialEq)]
pub enum MechanismSpec {
    /// One-bit mean mechanism + alpha-point rounding + permanent memoization,
    /// with optional output perturbation (`gamma > 0`).
    OneBitRrpm { s: u64, params: PrivacyParams },
    /// Additive-Laplace single-round baseline.
    Laplace { epsilon: f64 },
    /// d-bit flip histogram mechanism + permanent memoization, with optional
    /// per-bit output perturbation (`gamma > 0`).
    DBitFlipPm {
        k: usize,
        d: usize,
        params: PrivacyParams,
    },
}

impl MechanismSpec {
    pub fn label(&self) -> &'static str {
        match self {
            MechanismSpec::OneBitRrpm { .. } => "one-bit-rrpm",
            MechanismSpec::Laplace { .. } => "laplace",
            MechanismSpec::DBitFlipPm { .. } => "d-bit-flip-pm",
        }
    }

    pub fn epsilon(&self) -> f64 {
        match self {
            MechanismSpec::OneBitRrpm { params, .. } => params.epsilon(),
            MechanismSpec::Laplace { epsilon } => *epsilon,
            MechanismSpec::DBitFlipPm { params, .. } => params.epsilon(),
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            MechanismSpec::OneBitRrpm { params, .. } => params.gamma(),
            MechanismSpec::Laplace { .. } => 0.0,
            MechanismSpec::DBitFlipPm { params, .. } => params.gamma(),
        }
    }

    /// The sweep-specific size column: `s` for the rounding grid, `d` for
    /// histogram bits, 0 for the Laplace baseline.
    pub fn d_or_s(&self) -> u64 {
        match self {
            MechanismSpec::OneBitRrpm { s, .. } => *s,
            MechanismSpec::Laplace { .. } => 0,
            MechanismSpec::DBitFlipPm { d, .. } => *d as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub population: PopulationSpec,
    /// Counter range upper bound, shared by population and mechanism.
    pub m: u64,
    pub mechanism: MechanismSpec,
    pub trials: usize,
    pub seed: u64,
    /// Confidence parameter handed to the estimators.
    pub delta: f64,
    /// Clamp estimates to the estimand's natural range before measuring
    /// error. Off by default: clipping breaks unbiasedness.
    pub clip: bool,
}

/// Mean absolute estimation error over trials, with one standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub mechanism: &'static str,
    pub epsilon: f64,
    pub gamma: f64,
    pub n: usize,
    pub t: usize,
    pub trials: usize,
    pub d_or_s: u64,
    pub mean_error: f64,
    pub std_error: f64,
    pub per_trial_errors: Vec<f64>,
}

fn summarize(plan: &ExperimentPlan, pop: &Population, errors: Vec<f64>) -> ExperimentResult {
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    let std = if errors.len() > 1 {
        (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (errors.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    ExperimentResult {
        mechanism: plan.mechanism.label(),
        epsilon: plan.mechanism.epsilon(),
        gamma: plan.mechanism.gamma(),
        n: pop.n(),
        t: pop.t(),
        trials: plan.trials,
        d_or_s: plan.mechanism.d_or_s(),
        mean_error: mean,
        std_error: std,
        per_trial_errors: errors,
    }
}

fn validate_plan(plan: &ExperimentPlan) -> Result<()> {
    if plan.trials == 0 {
        return Err(Error::InvalidPlan("trials must be >= 1".into()));
    }
    if !plan.delta.is_finite() || plan.delta <= 0.0 || plan.delta >= 1.0 {
        return Err(Error::InvalidDelta(plan.delta));
    }
    Ok(())
}

/// Run a mean-estimation experiment. Accepts the memoized one-bit mechanism
/// or the Laplace baseline; when `gamma > 0` the collector is paired with
/// the effective budget so estimates stay unbiased.
pub fn run_mean_experiment(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    validate_plan(plan)?;
    let pop = generate_population(&plan.population, plan.m, plan.seed)?;
    let true_means: Vec<f64> = (1..=pop.t()).map(|r| pop.round_mean(r)).collect();

    let errors = match &plan.mechanism {
        MechanismSpec::OneBitRrpm { s, params } => {
            let cfg = MeanConfig::new(plan.m, *s)?;
            let eps_eff = effective_epsilon(params.epsilon(), params.gamma())?;
            let gamma = params.gamma();
            (0..plan.trials)
                .map(|trial| {
                    let mut aggs = vec![MeanAggregate::new(); pop.t()];
                    for user in 0..pop.n() {
                        let mut rng =
                            stream_rng(plan.seed, &[TRIAL_STREAM, trial as u64, user as u64]);
                        let state = MeanClientState::init(cfg, *params, &mut rng);
                        for round in 1..=pop.t() {
                            let x = CounterValue::new(pop.x(user, round), &cfg)
                                .expect("population values lie in [0, m]");
                            let mut bit = state.respond(x).bit;
                            if gamma > 0.0 {
                                bit = perturb_bit(bit, gamma, &mut rng)
                                    .expect("gamma validated by PrivacyParams");
                            }
                            aggs[round - 1].add(MeanResponse { bit });
                        }
                    }
                    mean_round_error(plan, &aggs, &true_means, eps_eff)
                })
                .collect::<Result<Vec<f64>>>()?
        }
        MechanismSpec::Laplace { epsilon } => {
            let cfg = MeanConfig::new(plan.m, plan.m)?;
            let params = PrivacyParams::new(*epsilon, 0.0)?;
            (0..plan.trials)
                .map(|trial| {
                    let mut sums = vec![0.0f64; pop.t()];
                    for user in 0..pop.n() {
                        let mut rng =
                            stream_rng(plan.seed, &[TRIAL_STREAM, trial as u64, user as u64]);
                        for round in 1..=pop.t() {
                            let x = CounterValue::new(pop.x(user, round), &cfg)
                                .expect("population values lie in [0, m]");
                            sums[round - 1] += laplace_mean_respond(x, &cfg, &params, &mut rng);
                        }
                    }
                    let total: f64 = sums
                        .iter()
                        .zip(&true_means)
                        .map(|(sum, truth)| {
                            let mut point = sum / pop.n() as f64;
                            if plan.clip {
                                point = point.clamp(0.0, plan.m as f64);
                            }
                            (point - truth).abs()
                        })
                        .sum();
                    Ok(total / pop.t() as f64)
                })
                .collect::<Result<Vec<f64>>>()?
        }
        MechanismSpec::DBitFlipPm { .. } => {
            return Err(Error::InvalidPlan(
                "histogram mechanism given to a mean experiment".into(),
            ))
        }
    };
    Ok(summarize(plan, &pop, errors))
}

fn mean_round_error(
    plan: &ExperimentPlan,
    aggs: &[MeanAggregate],
    true_means: &[f64],
    eps_eff: f64,
) -> Result<f64> {
    let total: f64 = aggs
        .iter()
        .zip(true_means)
        .map(|(agg, truth)| {
            let est = mean_estimate(agg, plan.m, eps_eff, plan.delta)?;
            let mut point = est.point;
            if plan.clip {
                point = point.clamp(0.0, plan.m as f64);
            }
            Ok((point - truth).abs())
        })
        .sum::<Result<f64>>()?;
    Ok(total / aggs.len() as f64)
}

/// Run a histogram-estimation experiment with the memoized d-bit flip
/// mechanism. The error metric per round is the maximum bucket error; when
/// `gamma > 0` each memoized bit is flipped fresh per round and the
/// estimator uses the per-bit effective budget.
pub fn run_hist_experiment(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    validate_plan(plan)?;
    let MechanismSpec::DBitFlipPm { k, d, params } = &plan.mechanism else {
        return Err(Error::InvalidPlan(
            "histogram experiment requires the d-bit flip mechanism".into(),
        ));
    };
    let cfg = HistConfig::new(*k, *d)?;
    let pop = generate_population(&plan.population, plan.m, plan.seed)?;
    let gamma = params.gamma();
    let eps_eff = if gamma > 0.0 {
        hist_effective_epsilon(params.epsilon(), gamma)?
    } else {
        params.epsilon()
    };

    // Bucketized population and true per-round histograms.
    let buckets_by_round: Vec<Vec<BucketValue>> = (1..=pop.t())
        .map(|round| {
            (0..pop.n())
                .map(|user| {
                    BucketValue::new(bucket_of(pop.x(user, round), plan.m, cfg.k()), &cfg)
                        .expect("bucket_of stays within [1, k]")
                })
                .collect()
        })
        .collect();
    let true_hists: Vec<Vec<f64>> = buckets_by_round
        .iter()
        .map(|round| {
            let mut counts = vec![0u64; cfg.k()];
            for v in round {
                counts[v.get() - 1] += 1;
            }
            counts.iter().map(|&c| c as f64 / pop.n() as f64).collect()
        })
        .collect();

    let errors: Vec<f64> = (0..plan.trials)
        .map(|trial| {
            let public_seed = child_seed(plan.seed, &[PUBLIC_COIN_STREAM, trial as u64]);
            let mut aggs = vec![HistAggregate::new(cfg); pop.t()];
            let mut perturbed = vec![false; cfg.d()];
            // `user` doubles as the stream tag and the public-coin identity.
            #[allow(clippy::needless_range_loop)]
            for user in 0..pop.n() {
                let mut rng = stream_rng(plan.seed, &[TRIAL_STREAM, trial as u64, user as u64]);
                let state = HistClientState::init(cfg, *params, user as u64, public_seed, &mut rng);
                for round in 1..=pop.t() {
                    let bits = state.memoized_bits(buckets_by_round[round - 1][user]);
                    if gamma > 0.0 {
                        for (out, &bit) in perturbed.iter_mut().zip(bits) {
                            *out = perturb_bit(bit, gamma, &mut rng)
                                .expect("gamma validated by PrivacyParams");
                        }
                        aggs[round - 1].add_bits(state.buckets(), &perturbed);
                    } else {
                        aggs[round - 1].add_bits(state.buckets(), bits);
                    }
                }
            }
            let mut total = 0.0;
            for (agg, truth) in aggs.iter().zip(&true_hists) {
                let ests = hist_estimate(agg, eps_eff, plan.delta)?;
                let max_err = ests
                    .iter()
                    .zip(truth)
                    .map(|(est, h)| {
                        let mut point = est.point;
                        if plan.clip {
                            point = point.clamp(0.0, 1.0);
                        }
                        (point - h).abs()
                    })
                    .fold(0.0f64, f64::max);
                total += max_err;
            }
            Ok(total / pop.t() as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(summarize(plan, &pop, errors))
}
