//! Command-line front end.
//!
//! Exit status: 0 on success, 1 on invalid input or a failed run, 2 when
//! `oracle` or `constants --check` finds a mismatch.

use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use gwrange::analytic::{
    brownian_laplace_exponent, c_beta, laplace_exponent, meander_sup_tail, rho_closed,
    rho_integral,
};
use gwrange::env::{psi, psi_prime, EnvironmentParams, EnvironmentStore, LawFamily, OffspringLaw};
use gwrange::harness::{
    environment_seed, fit_slope, read_records, run_sweep_to, ExperimentConfig, StoppingRule,
};
use gwrange::oracle::{run_suite, HConvention};
use gwrange::range::{compute_range, FSpec, RangeFunctional};
use gwrange::rng::{stream, Purpose};
use gwrange::spine::{
    barrier_passage_prob, downfall_max_laplace, estimate_psi_sum, laplace_tau_barrier,
    DownfallConfig, PsiQuery, SpineLaw,
};
use gwrange::stats::{median, median_std_error};
use gwrange::walk::{Walker, DEFAULT_STEP_BUDGET};
use gwrange::{Error, Result};

/// Biased random walks on Galton-Watson trees in the boundary case.
///
/// The default output directory of `sweep` can be set with GWRANGE_OUT.
#[derive(Parser, Debug)]
#[command(name = "gwrange", version)]
struct Cli {
    /// Master seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (all cores when absent).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate a displacement law to the boundary case and print it.
    Calibrate(EnvArgs),
    /// Run one walk and print diagnostics.
    Simulate(SimulateArgs),
    /// Run a sweep described by a TOML config.
    Sweep(SweepArgs),
    /// Estimate a Ψ sum on the spine.
    Psi(PsiArgs),
    /// One-dimensional estimators for the spine walk.
    #[command(alias = "section4")]
    Drawdown {
        #[command(subcommand)]
        which: DrawdownCommand,
    },
    /// Print ρ, c_β and the meander tail.
    Constants(ConstantsArgs),
    /// Run the exact-oracle suite.
    Oracle(OracleArgs),
    /// Fit slopes and statistics on a records file.
    Fit(FitArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Family {
    Gaussian,
    TwoPoint,
}

#[derive(Args, Debug, Clone)]
struct EnvArgs {
    /// Displacement family.
    #[arg(long, value_enum, default_value = "gaussian")]
    family: Family,
    /// Half-distance between the two values of the two-point law.
    #[arg(long, default_value_t = 2.0)]
    gap: f64,
    /// Pin the up-probability of the two-point law.
    #[arg(long)]
    prob_up: Option<f64>,
    /// Deterministic number of children.
    #[arg(long, default_value_t = 2, conflicts_with = "offspring_pmf")]
    offspring: u32,
    /// Offspring pmf as comma-separated weights for 0, 1, 2, ...
    #[arg(long, value_delimiter = ',')]
    offspring_pmf: Option<Vec<f64>>,
}

impl EnvArgs {
    fn params(&self) -> Result<EnvironmentParams> {
        let offspring = match &self.offspring_pmf {
            Some(w) => OffspringLaw::Pmf { weights: w.clone() },
            None => OffspringLaw::Deterministic { m: self.offspring },
        };
        let family = match self.family {
            Family::Gaussian => LawFamily::Gaussian,
            Family::TwoPoint => LawFamily::TwoPoint {
                gap: self.gap,
                prob_up: self.prob_up,
            },
        };
        EnvironmentParams::calibrated(&family, offspring)
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    env: EnvArgs,
    /// Stop after this many steps.
    #[arg(long, conflicts_with = "excursions", required_unless_present = "excursions")]
    steps: Option<u64>,
    /// Stop at the n-th return to e*.
    #[arg(long)]
    excursions: Option<u64>,
    /// Step budget for the excursion rule.
    #[arg(long, default_value_t = DEFAULT_STEP_BUDGET)]
    step_budget: u64,
    /// Write the trajectory (`t vertex depth V` per line) to this file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `out_dir`, then GWRANGE_OUT, then `results`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `experiment_id`.
    #[arg(long)]
    experiment_id: Option<String>,
    /// Overrides `replications`.
    #[arg(long)]
    replications: Option<u32>,
    /// Overrides `n_grid` (comma-separated).
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<u64>>,
    /// Overrides `stopping`.
    #[arg(long, value_enum)]
    stopping: Option<Stopping>,
    /// Overrides `step_budget`.
    #[arg(long)]
    step_budget: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Stopping {
    AtSteps,
    AtExcursions,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FFamily {
    Constant,
    LastAbove,
    EarlyAbove,
    Penalized,
    EarlyPenalized,
}

#[derive(Args, Debug)]
struct FArgs {
    /// Path functional family.
    #[arg(long = "f", value_enum, default_value = "constant")]
    f_family: FFamily,
    #[arg(long, default_value_t = 1.2)]
    alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    beta: f64,
    /// Threshold multiplier of the penalized family.
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    /// Penalty exponent of the penalized family (0 or 1).
    #[arg(long, default_value_t = 1)]
    d: u8,
}

impl FArgs {
    fn spec(&self) -> FSpec {
        let (alpha, beta) = (self.alpha, self.beta);
        match self.f_family {
            FFamily::Constant => FSpec::Constant,
            FFamily::LastAbove => FSpec::LastAbove { alpha },
            FFamily::EarlyAbove => FSpec::EarlyAbove { alpha, beta },
            FFamily::Penalized => FSpec::Penalized {
                alpha,
                a: self.a,
                d: self.d,
            },
            FFamily::EarlyPenalized => FSpec::EarlyPenalized { alpha, beta },
        }
    }
}

#[derive(Args, Debug)]
struct PsiArgs {
    #[command(flatten)]
    env: EnvArgs,
    #[command(flatten)]
    f: FArgs,
    /// Upper bound on H along the line (default: no bound).
    #[arg(long)]
    lambda: Option<f64>,
    /// Strict lower bound on H at the endpoint (default: n^b).
    #[arg(long)]
    lambda_prime: Option<f64>,
    #[arg(long)]
    n: f64,
    #[arg(long, default_value_t = 0.0)]
    b: f64,
    /// Largest generation (default: ⌈10 (ln n)³⌉).
    #[arg(long)]
    max_gen: Option<usize>,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
}

#[derive(Subcommand, Debug)]
enum DrawdownCommand {
    /// P(S reaches t before its drawdown reaches √ℓ or it drops below −B).
    Barrier {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        t_target: f64,
        #[arg(long)]
        ell: f64,
        #[arg(long = "floor", default_value_t = 10.0)]
        b: f64,
        /// Total particle launches.
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
    },
    /// E[e^{−cσ²τ_r/(2ℓ²)}; τ_r before the drawdown reaches ℓ].
    Laplace {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        c: f64,
        #[arg(long)]
        r: f64,
        #[arg(long)]
        ell: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
    },
    /// E[e^{−max drawdown before τ_r}].
    Downfall {
        #[command(flatten)]
        env: EnvArgs,
        #[arg(long)]
        r: f64,
        /// Quadrature nodes.
        #[arg(long, default_value_t = 50)]
        nodes: usize,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
    },
}

#[derive(Args, Debug)]
struct ConstantsArgs {
    /// Cross-check ρ against its integral form; exit 2 on mismatch.
    #[arg(long)]
    check: bool,
}

#[derive(Args, Debug)]
struct OracleArgs {
    /// Use the root-exclusive H in the closed forms (negative control).
    #[arg(long)]
    corrupt_formula: bool,
    /// Spine samples per enumeration check.
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    /// Excursions per simulated-law check.
    #[arg(long, default_value_t = 100_000)]
    excursions: u64,
}

#[derive(Args, Debug)]
struct FitArgs {
    /// records.jsonl written by `sweep`.
    #[arg(long)]
    records: PathBuf,
    /// Functional name (all functionals when absent).
    #[arg(long)]
    functional: Option<String>,
}

enum Outcome {
    Ok,
    CheckFailed,
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn calibrate(env: &EnvArgs) -> Result<Outcome> {
    let p = env.params()?;
    print_json(&json!({
        "offspring": p.offspring,
        "increment": p.increment,
        "psi_at_1": p.psi_at_1,
        "psi_prime_at_1": p.psi_prime_at_1,
        "sigma2": p.sigma2,
        "tilted_law": SpineLaw::tilted(&p),
        "psi_at_0": psi(&p, 0.0)?,
        "psi_prime_at_0": psi_prime(&p, 0.0)?,
    }))?;
    Ok(Outcome::Ok)
}

fn simulate(args: &SimulateArgs, seed: u64) -> Result<Outcome> {
    let params = args.env.params()?;
    let store = EnvironmentStore::lazy(params, environment_seed(seed, 0));
    let mut walker = Walker::new(store, stream(seed, Purpose::Walk, 0)).with_step_budget(args.step_budget);
    if let Some(path) = &args.trace {
        walker = walker.with_trace(Box::new(BufWriter::new(fs::File::create(path)?)));
    }
    let n = match (args.steps, args.excursions) {
        (Some(s), _) => {
            walker.run_until_steps(s)?;
            s
        }
        (None, Some(e)) => {
            walker.run_until_excursions(e)?;
            e
        }
        (None, None) => unreachable!("clap requires one of them"),
    };
    let state = *walker.state();
    let range = compute_range(walker.ledger(), walker.store(), &RangeFunctional::plain(), n as f64);
    print_json(&json!({
        "steps": state.steps,
        "excursions": state.excursions,
        "range": range.value,
        "log_plus_range": range.log_plus,
        "realised_vertices": walker.store().len(),
        "max_depth_seen": state.max_depth_seen,
        "min_potential_seen": state.min_potential_seen,
        "identity_violations": walker.ledger().identity_violations().len(),
    }))?;
    Ok(Outcome::Ok)
}

fn sweep(args: &SweepArgs, cli: &Cli, seed_given: bool) -> Result<Outcome> {
    let mut config = ExperimentConfig::load(&args.config)?;
    if seed_given {
        config.master_seed = cli.seed;
    }
    if cli.threads.is_some() {
        config.threads = cli.threads;
    }
    if let Some(id) = &args.experiment_id {
        config.experiment_id = id.clone();
    }
    if let Some(r) = args.replications {
        config.replications = r;
    }
    if let Some(g) = &args.n_grid {
        config.n_grid = g.clone();
    }
    if let Some(s) = args.stopping {
        config.stopping = match s {
            Stopping::AtSteps => StoppingRule::AtSteps,
            Stopping::AtExcursions => StoppingRule::AtExcursions,
        };
    }
    if let Some(b) = args.step_budget {
        config.step_budget = b;
    }
    let out = args
        .out
        .clone()
        .or_else(|| config.out_dir.clone())
        .or_else(|| std::env::var_os("GWRANGE_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"));
    let result = run_sweep_to(&config, &out)?;
    print_json(&json!({
        "out_dir": out,
        "records": result.records.len(),
        "config_hash": config.hash(),
    }))?;
    Ok(Outcome::Ok)
}

fn psi_cmd(args: &PsiArgs, seed: u64) -> Result<Outcome> {
    let params = args.env.params()?;
    let query = PsiQuery {
        f: args.f.spec(),
        lambda: args.lambda.unwrap_or(f64::INFINITY),
        lambda_prime: args.lambda_prime,
        n: args.n,
        b: args.b,
        max_gen: args.max_gen,
    };
    let est = estimate_psi_sum(&SpineLaw::tilted(&params), &query, args.samples, seed)?;
    print_json(&json!({ "query": query, "estimate": est }))?;
    Ok(Outcome::Ok)
}

fn drawdown(which: &DrawdownCommand, seed: u64) -> Result<Outcome> {
    let est = match which {
        DrawdownCommand::Barrier { env, t_target, ell, b, samples } => {
            let law = SpineLaw::tilted(&env.params()?);
            barrier_passage_prob(&law, *t_target, *ell, *b, *samples, seed)?
        }
        DrawdownCommand::Laplace { env, c, r, ell, samples } => {
            let law = SpineLaw::tilted(&env.params()?);
            laplace_tau_barrier(&law, *c, *r, *ell, *samples, seed)?
        }
        DrawdownCommand::Downfall { env, r, nodes, samples } => {
            let law = SpineLaw::tilted(&env.params()?);
            let grid = DownfallConfig {
                nodes: *nodes,
                ..DownfallConfig::default()
            };
            downfall_max_laplace(&law, *r, &grid, *samples, seed)?
        }
    };
    print_json(&json!({ "estimate": est, "ratio": est.ratio() }))?;
    Ok(Outcome::Ok)
}

/// Largest allowed gap between the closed and integral forms of ρ.
const RHO_CHECK_TOLERANCE: f64 = 1e-4;

fn constants(args: &ConstantsArgs) -> Result<Outcome> {
    let pi2 = std::f64::consts::PI.powi(2);
    println!("{:>10} {:>14} {:>14} {:>14}", "c", "rho(c)", "1+sqrt(c)-rho", "sqrt(c)coth");
    for c in [0.01, 0.25, 1.0, pi2 / 4.0, 5.0, 20.0] {
        println!(
            "{c:>10.6} {:>14.10} {:>14.10} {:>14.10}",
            rho_closed(c),
            laplace_exponent(c),
            brownian_laplace_exponent(c)
        );
    }
    println!();
    println!("{:>10} {:>14}", "beta", "c_beta");
    for beta in [1.0, 1.5, 2.0, 3.0] {
        println!("{beta:>10.3} {:>14.10}", c_beta(beta)?);
    }
    println!();
    println!("{:>10} {:>14}", "u", "P(sup m > u)");
    for u in [0.25, 0.5, 1.0, 1.5, 2.0, 3.0] {
        println!("{u:>10.3} {:>14.10}", meander_sup_tail(u));
    }
    if !args.check {
        return Ok(Outcome::Ok);
    }
    println!();
    let mut ok = true;
    let ln2 = std::f64::consts::LN_2;
    for c in [0.25, 1.0, pi2 / 4.0, 5.0] {
        for s2 in [1.0, 2.0 * ln2] {
            let i = rho_integral(c, s2)?;
            let diff = (i - rho_closed(c)).abs();
            let pass = diff <= RHO_CHECK_TOLERANCE;
            ok &= pass;
            println!(
                "{} rho c={c:.4} sigma2={s2:.4}: closed {:.10} integral {i:.10} |diff| {diff:.1e}",
                if pass { "PASS" } else { "FAIL" },
                rho_closed(c)
            );
        }
    }
    Ok(if ok { Outcome::Ok } else { Outcome::CheckFailed })
}

fn oracle(args: &OracleArgs, seed: u64) -> Result<Outcome> {
    let convention = if args.corrupt_formula {
        HConvention::RootExclusive
    } else {
        HConvention::RootInclusive
    };
    let report = run_suite(convention, args.samples, args.excursions, seed)?;
    print!("{}", report.table());
    Ok(if report.all_passed() {
        Outcome::Ok
    } else {
        Outcome::CheckFailed
    })
}

fn fit(args: &FitArgs) -> Result<Outcome> {
    let records = read_records(&args.records)?;
    let mut names: Vec<String> = records.iter().map(|r| r.functional.clone()).collect();
    names.dedup();
    names.sort();
    names.dedup();
    if let Some(f) = &args.functional {
        if !names.contains(f) {
            return Err(Error::InvalidParams(format!("no records for functional {f}")));
        }
        names = vec![f.clone()];
    }
    let mut out = Vec::new();
    for name in names {
        let fit = fit_slope(&records, &name);
        let last_n = records.iter().filter(|r| r.functional == name).map(|r| r.n).max();
        let stats: Vec<f64> = records
            .iter()
            .filter(|r| r.functional == name && Some(r.n) == last_n)
            .filter_map(|r| r.normalized_statistic)
            .collect();
        let (fit, fit_error) = match fit {
            Ok(f) => (Some(f), None),
            Err(e @ Error::ConfigMismatch(_)) => return Err(e),
            Err(e) => (None, Some(e.to_string())),
        };
        out.push(json!({
            "functional": name,
            "fit": fit,
            "fit_error": fit_error,
            "largest_n": last_n,
            "statistic_median": (!stats.is_empty()).then(|| median(&stats)),
            "statistic_median_se": (stats.len() > 1).then(|| median_std_error(&stats)),
        }));
    }
    print_json(&out)?;
    Ok(Outcome::Ok)
}

fn run(cli: &Cli, seed_given: bool) -> Result<Outcome> {
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::InvalidParams("--threads must be positive".into()));
        }
        // a second initialisation only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match &cli.command {
        Command::Calibrate(env) => calibrate(env),
        Command::Simulate(a) => simulate(a, cli.seed),
        Command::Sweep(a) => sweep(a, cli, seed_given),
        Command::Psi(a) => psi_cmd(a, cli.seed),
        Command::Drawdown { which } => drawdown(which, cli.seed),
        Command::Constants(a) => constants(a),
        Command::Oracle(a) => oracle(a, cli.seed),
        Command::Fit(a) => fit(a),
    }
}

fn main() -> ExitCode {
    let matches = match <Cli as clap::CommandFactory>::command().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let seed_given = matches.value_source("seed") == Some(clap::parser::ValueSource::CommandLine)
        || matches
            .subcommand()
            .is_some_and(|(_, sub)| sub.value_source("seed") == Some(clap::parser::ValueSource::CommandLine));
    let cli = match <Cli as clap::FromArgMatches>::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match run(&cli, seed_given) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
