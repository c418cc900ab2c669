//! Command-line driver: configure an experiment, run it, and emit result,
//! pattern, or accounting tables.
//!
//! Exit codes are a stable scripting contract: 0 on success, 1 on I/O
//! failure, 2 on flag or input validation failure (the message names the
//! violated invariant). Every run is reproducible from its flags and seed,
//! which are echoed into a `# config:` line atop each output file.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use ldp_telemetry::mechanisms::{MeanConfig, PrivacyParams};
use ldp_telemetry::patterns::support_distribution;
use ldp_telemetry::perturbation::EffectiveBudget;
use ldp_telemetry::sim::{
    generate_population, rounded_sequences, run_hist_experiment, run_mean_experiment,
    ExperimentPlan, ExperimentResult, MechanismSpec, PopulationKind, PopulationSpec,
};

#[derive(Parser)]
#[command(
    name = "ldp-telemetry",
    about = "Simulate locally differentially private collection of counter data",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mean-estimation experiment over an epsilon sweep
    SimulateMean(MeanArgs),
    /// Run a histogram-estimation experiment over an epsilon/d sweep
    SimulateHist(HistArgs),
    /// Compute the behavior-pattern support distribution of a trace
    Patterns(PatternsArgs),
    /// Print effective and multi-counter privacy budgets
    Accounting(AccountingArgs),
}

#[derive(Args)]
struct MeanArgs {
    /// Privacy budgets to sweep, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    epsilon: Vec<f64>,

    /// Output-perturbation flip probability (0 disables perturbation)
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,

    /// User count (ignored for trace populations)
    #[arg(long, default_value_t = 0)]
    n: usize,

    /// Collection rounds per trial (ignored for trace populations)
    #[arg(long, default_value_t = 1)]
    t: usize,

    /// Counter range upper bound, in counter units (seconds)
    #[arg(long, default_value_t = 86400)]
    m: u64,

    /// Rounding granularity; must divide m (defaults to m)
    #[arg(long)]
    s: Option<u64>,

    /// Population: constant:V | uniform:LO:HI | normal:MEAN:STD[:LO:HI]
    /// | age:LO:HI | trace:PATH
    #[arg(long)]
    population: String,

    /// Independent repetitions of the whole collection
    #[arg(long, default_value_t = 200)]
    trials: usize,

    /// Master seed; reruns with the same seed are byte-identical
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Confidence parameter for error bounds
    #[arg(long, default_value_t = ldp_telemetry::collector::DEFAULT_DELTA)]
    delta: f64,

    /// Result CSV path
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,

    /// Also run a single-round baseline at each epsilon
    #[arg(long, value_enum)]
    baseline: Option<Baseline>,

    /// JSON mirror with per-trial error arrays
    #[arg(long)]
    json: Option<PathBuf>,

    /// Clamp estimates into [0, m] before measuring error (breaks
    /// unbiasedness; off by default)
    #[arg(long)]
    clip: bool,
}

#[derive(Args)]
struct HistArgs {
    /// Privacy budgets to sweep, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    epsilon: Vec<f64>,

    /// Per-bit output-perturbation flip probability (0 disables)
    #[arg(long, default_value_t = 0.0)]
    gamma: f64,

    /// User count (ignored for trace populations)
    #[arg(long, default_value_t = 0)]
    n: usize,

    /// Collection rounds per trial (ignored for trace populations)
    #[arg(long, default_value_t = 1)]
    t: usize,

    /// Counter range upper bound used for bucketization
    #[arg(long, default_value_t = 86400)]
    m: u64,

    /// Number of histogram buckets
    #[arg(long, default_value_t = 32)]
    k: usize,

    /// Bits sent per user, comma separated sweep; each must satisfy d <= k
    #[arg(long, value_delimiter = ',', default_value = "4")]
    d: Vec<usize>,

    /// Population: constant:V | uniform:LO:HI | normal:MEAN:STD[:LO:HI]
    /// | age:LO:HI | trace:PATH
    #[arg(long)]
    population: String,

    #[arg(long, default_value_t = 200)]
    trials: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = ldp_telemetry::collector::DEFAULT_DELTA)]
    delta: f64,

    #[arg(long, default_value = "results.csv")]
    out: PathBuf,

    /// JSON mirror with per-trial error arrays
    #[arg(long)]
    json: Option<PathBuf>,

    /// Clamp bucket estimates into [0, 1] before measuring error
    #[arg(long)]
    clip: bool,
}

#[derive(Args)]
struct PatternsArgs {
    /// Trace CSV with header user_id,t,value_seconds
    #[arg(long)]
    trace: PathBuf,

    /// Counter range upper bound
    #[arg(long, default_value_t = 86400)]
    m: u64,

    /// Rounding granularity; must divide m (defaults to m)
    #[arg(long)]
    s: Option<u64>,

    /// Seed for the per-user rounding offsets
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Support-distribution CSV path
    #[arg(long, default_value = "patterns.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct AccountingArgs {
    /// Privacy budgets, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    epsilon: Vec<f64>,

    /// Perturbation probabilities, comma separated
    #[arg(long, value_delimiter = ',', default_value = "0")]
    gamma: Vec<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Laplace,
}

enum CliError {
    Core(ldp_telemetry::Error),
    Io(std::io::Error),
}

impl From<ldp_telemetry::Error> for CliError {
    fn from(e: ldp_telemetry::Error) -> Self {
        CliError::Core(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => e.fmt(f),
            CliError::Io(e) => e.fmt(f),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Io(_) | CliError::Core(ldp_telemetry::Error::Io(_)) => 1,
            CliError::Core(_) => 2,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SimulateMean(args) => simulate_mean(args),
        Command::SimulateHist(args) => simulate_hist(args),
        Command::Patterns(args) => patterns(args),
        Command::Accounting(args) => accounting(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Parse a population flag of the form `kind:arg[:arg...]`.
fn parse_population(text: &str, n: usize, t: usize) -> Result<PopulationSpec, CliError> {
    let invalid = |msg: String| CliError::Core(ldp_telemetry::Error::InvalidPlan(msg));
    let parts: Vec<&str> = text.split(':').collect();
    let num = |field: &str| -> Result<u64, CliError> {
        field
            .parse::<u64>()
            .map_err(|_| invalid(format!("population: '{field}' is not an integer")))
    };
    let real = |field: &str| -> Result<f64, CliError> {
        field
            .parse::<f64>()
            .map_err(|_| invalid(format!("population: '{field}' is not a number")))
    };
    let kind = match (parts[0], parts.len()) {
        ("constant", 2) => PopulationKind::Constant(num(parts[1])?),
        ("uniform", 3) => PopulationKind::Uniform {
            lo: num(parts[1])?,
            hi: num(parts[2])?,
        },
        ("normal", 3) => PopulationKind::TruncatedNormal {
            mean: real(parts[1])?,
            std_dev: real(parts[2])?,
            lo: 0,
            hi: u64::MAX,
        },
        ("normal", 5) => PopulationKind::TruncatedNormal {
            mean: real(parts[1])?,
            std_dev: real(parts[2])?,
            lo: num(parts[3])?,
            hi: num(parts[4])?,
        },
        ("age", 3) => PopulationKind::AgeInDays {
            lo: num(parts[1])?,
            hi: num(parts[2])?,
        },
        ("trace", 2) => PopulationKind::Trace(PathBuf::from(parts[1])),
        _ => {
            return Err(invalid(format!(
                "population '{text}' not recognized; expected constant:V, uniform:LO:HI, \
                 normal:MEAN:STD[:LO:HI], age:LO:HI, or trace:PATH"
            )))
        }
    };
    if !matches!(kind, PopulationKind::Trace(_)) && n == 0 {
        return Err(invalid("synthetic populations require --n >= 1".into()));
    }
    Ok(PopulationSpec { kind, n, t })
}

/// The truncated-normal `hi` default is the counter range bound.
fn cap_population(mut spec: PopulationSpec, m: u64) -> PopulationSpec {
    if let PopulationKind::TruncatedNormal { hi, .. } = &mut spec.kind {
        if *hi == u64::MAX {
            *hi = m;
        }
    }
    spec
}

fn join<T: std::fmt::Display>(values: &[T]) -> String {
    values
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn write_file(path: &PathBuf, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(CliError::Io)
}

#[derive(Serialize)]
struct JsonReport<'a> {
    config: &'a str,
    rows: Vec<JsonRow>,
}

#[derive(Serialize)]
struct JsonRow {
    mechanism: String,
    epsilon: f64,
    gamma: f64,
    n: usize,
    t: usize,
    d_or_s: u64,
    trials: usize,
    mean_error: f64,
    std_error: f64,
    per_trial_errors: Vec<f64>,
}

fn emit_results(
    config: &str,
    results: &[ExperimentResult],
    out: &PathBuf,
    json: Option<&PathBuf>,
) -> Result<(), CliError> {
    let mut csv = String::new();
    let _ = writeln!(csv, "# config: {config}");
    let _ = writeln!(
        csv,
        "mechanism,epsilon,gamma,n,d_or_s,trials,mean_error,std_error"
    );
    for r in results {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{:.6},{:.6}",
            r.mechanism, r.epsilon, r.gamma, r.n, r.d_or_s, r.trials, r.mean_error, r.std_error
        );
    }
    write_file(out, &csv)?;

    if let Some(path) = json {
        let report = JsonReport {
            config,
            rows: results
                .iter()
                .map(|r| JsonRow {
                    mechanism: r.mechanism.to_string(),
                    epsilon: r.epsilon,
                    gamma: r.gamma,
                    n: r.n,
                    t: r.t,
                    d_or_s: r.d_or_s,
                    trials: r.trials,
                    mean_error: r.mean_error,
                    std_error: r.std_error,
                    per_trial_errors: r.per_trial_errors.clone(),
                })
                .collect(),
        };
        let body = serde_json::to_string_pretty(&report).expect("report serializes");
        write_file(path, &body)?;
    }
    Ok(())
}

fn simulate_mean(args: MeanArgs) -> Result<(), CliError> {
    let s = args.s.unwrap_or(args.m);
    // Validate shared parameters before the sweep so bad flags fail fast.
    MeanConfig::new(args.m, s)?;
    let population = cap_population(parse_population(&args.population, args.n, args.t)?, args.m);

    let mut config = format!(
        "simulate-mean --epsilon {} --gamma {} --n {} --t {} --m {} --s {s} --population {} \
         --trials {} --seed {} --delta {}",
        join(&args.epsilon),
        args.gamma,
        args.n,
        args.t,
        args.m,
        args.population,
        args.trials,
        args.seed,
        args.delta,
    );
    if args.baseline.is_some() {
        config.push_str(" --baseline laplace");
    }
    if args.clip {
        config.push_str(" --clip");
    }
    let _ = write!(config, " --out {}", args.out.display());

    let mut results = Vec::new();
    for &epsilon in &args.epsilon {
        let plan = ExperimentPlan {
            population: population.clone(),
            m: args.m,
            mechanism: MechanismSpec::OneBitRrpm {
                s,
                params: PrivacyParams::new(epsilon, args.gamma)?,
            },
            trials: args.trials,
            seed: args.seed,
            delta: args.delta,
            clip: args.clip,
        };
        results.push(run_mean_experiment(&plan)?);
        if let Some(Baseline::Laplace) = args.baseline {
            let plan = ExperimentPlan {
                mechanism: MechanismSpec::Laplace { epsilon },
                ..plan
            };
            results.push(run_mean_experiment(&plan)?);
        }
    }
    emit_results(&config, &results, &args.out, args.json.as_ref())
}

fn simulate_hist(args: HistArgs) -> Result<(), CliError> {
    let population = cap_population(parse_population(&args.population, args.n, args.t)?, args.m);

    let mut config = format!(
        "simulate-hist --epsilon {} --gamma {} --n {} --t {} --m {} --k {} --d {} \
         --population {} --trials {} --seed {} --delta {}",
        join(&args.epsilon),
        args.gamma,
        args.n,
        args.t,
        args.m,
        args.k,
        join(&args.d),
        args.population,
        args.trials,
        args.seed,
        args.delta,
    );
    if args.clip {
        config.push_str(" --clip");
    }
    let _ = write!(config, " --out {}", args.out.display());

    let mut results = Vec::new();
    for &epsilon in &args.epsilon {
        for &d in &args.d {
            let plan = ExperimentPlan {
                population: population.clone(),
                m: args.m,
                mechanism: MechanismSpec::DBitFlipPm {
                    k: args.k,
                    d,
                    params: PrivacyParams::new(epsilon, args.gamma)?,
                },
                trials: args.trials,
                seed: args.seed,
                delta: args.delta,
                clip: args.clip,
            };
            results.push(run_hist_experiment(&plan)?);
        }
    }
    emit_results(&config, &results, &args.out, args.json.as_ref())
}

fn patterns(args: PatternsArgs) -> Result<(), CliError> {
    let s = args.s.unwrap_or(args.m);
    let cfg = MeanConfig::new(args.m, s)?;
    let spec = PopulationSpec {
        kind: PopulationKind::Trace(args.trace.clone()),
        n: 0,
        t: 0,
    };
    let pop = generate_population(&spec, args.m, args.seed)?;
    let sequences = rounded_sequences(&pop, &cfg, args.seed)?;
    let dist = support_distribution(&sequences)?;

    let config = format!(
        "patterns --trace {} --m {} --s {s} --seed {} --out {}",
        args.trace.display(),
        args.m,
        args.seed,
        args.out.display(),
    );
    let mut csv = String::new();
    let _ = writeln!(csv, "# config: {config}");
    let _ = writeln!(csv, "pattern_rank,support,cumulative_user_fraction");
    let fractions = dist.cumulative_fractions();
    for (rank, (entry, fraction)) in dist.entries().iter().zip(&fractions).enumerate() {
        let _ = writeln!(csv, "{},{},{:.6}", rank + 1, entry.support, fraction);
    }
    write_file(&args.out, &csv)
}

fn accounting(args: AccountingArgs) -> Result<(), CliError> {
    println!("epsilon,gamma,epsilon_prime,multiapp_epsilon");
    for &epsilon in &args.epsilon {
        for &gamma in &args.gamma {
            let budget = EffectiveBudget::for_params(&PrivacyParams::new(epsilon, gamma)?);
            println!(
                "{epsilon},{gamma},{:.4},{:.4}",
                budget.epsilon_prime(),
                budget.epsilon_multiapp()
            );
        }
    }
    Ok(())
}
