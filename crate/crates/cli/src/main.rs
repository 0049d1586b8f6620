//! `condep`: estimate Λ_φ(Y|X) from data, compute reference values for
//! analytic copulas, run the simulation study, rank predictors.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or input error,
//! 3 violated hypothesis (degenerate response, inadmissible φ).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use condep::measures::CSV_HEADER;
use condep::simharness::{self, ExperimentConfig, FULL_REPLICATIONS};
use condep::{
    estimate_with, lambda_phi, lambda_phi_oracle, read_csv, read_table, true_lambda, Checkerboard, CopulaModel, Error,
    EstimateOptions, Phi, ReadOptions, TiePolicy,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Parser)]
#[command(name = "condep", version, about = "Convex-function measures of directed dependence")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ties {
    /// Break ties by a seeded random key
    Jitter,
    /// Tied observations share their rank interval
    Midrank,
}

impl From<Ties> for TiePolicy {
    fn from(t: Ties) -> Self {
        match t {
            Ties::Jitter => TiePolicy::SeededJitter,
            Ties::Midrank => TiePolicy::MidRank,
        }
    }
}

#[derive(clap::Args)]
struct EstimationFlags {
    /// Resolution exponent: N = max(2, floor(n^s))
    #[arg(long, default_value_t = 0.5)]
    s: f64,
    /// Seed for tie-breaking
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Tie handling
    #[arg(long, value_enum, default_value_t = Ties::Jitter)]
    ties: Ties,
    /// Gauss-Legendre order for functions without a closed-form segment average
    #[arg(long, default_value_t = 16)]
    quadrature_order: usize,
    /// Drop rows with missing values instead of failing
    #[arg(long, default_value_t = false)]
    drop_incomplete: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate Lambda_phi(Y|X) from two CSV columns; prints phi,N,numerator,normalizer,value
    Estimate {
        /// Input CSV file
        #[arg(long)]
        csv: PathBuf,
        /// Column of X (name or 0-based index)
        #[arg(long = "x")]
        x_col: String,
        /// Column of Y (name or 0-based index)
        #[arg(long = "y")]
        y_col: String,
        /// Convex function: abs^p:P, expsgn:C or expabs:C
        #[arg(long, default_value = "abs^p:1")]
        phi: String,
        #[command(flatten)]
        flags: EstimationFlags,
    },
    /// Reference value of Lambda_phi for an analytic copula from a fine checkerboard
    TrueValue {
        /// indep, como, counter, mo:A,B, fgm:T or frechet:A
        model: String,
        /// abs^p:P, expsgn:C or expabs:C
        phi: String,
        /// Fine resolution, a power of two >= 128
        #[arg(default_value_t = 512)]
        n_fine: usize,
        /// Gauss-Legendre order for functions without a closed-form segment average
        #[arg(long, default_value_t = 16)]
        quadrature_order: usize,
    },
    /// Run a simulation study from a key=value config; writes records.csv, summary.csv and SVG boxplots
    Simulate {
        /// Config file
        config: PathBuf,
        /// Output directory
        out_dir: PathBuf,
        /// Use 1000 replications instead of the configured count (default 100)
        #[arg(long, default_value_t = false)]
        full: bool,
        /// Override the configured number of worker threads
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Rank the predictors of a table by their estimated Lambda_phi(Y|X)
    Rank {
        /// Input CSV file
        #[arg(long)]
        csv: PathBuf,
        /// Response column (name or 0-based index)
        #[arg(long = "y")]
        y_col: String,
        /// Comma-separated convex functions
        #[arg(long, default_value = "abs^p:1,abs^p:2,abs^p:3")]
        phis: String,
        #[command(flatten)]
        flags: EstimationFlags,
    },
    /// Compare the exact sum with the brute-force midpoint oracle on seeded random checkerboards
    OracleCheck {
        /// Number of random checkerboards
        #[arg(long, default_value_t = 50)]
        cases: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Oracle lattice size per axis
        #[arg(long, default_value_t = 800)]
        grid: usize,
        /// Largest resolution drawn
        #[arg(long, default_value_t = 24)]
        max_n: usize,
        /// Largest acceptable discrepancy
        #[arg(long, default_value_t = 2e-3)]
        tolerance: f64,
    },
}

enum Failure {
    Input(String),
    Hypothesis(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_hypothesis_violation() {
            Failure::Hypothesis(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

type Outcome = Result<(), Failure>;

fn parse_phi(descriptor: &str, quadrature_order: usize) -> Result<Phi, Failure> {
    if quadrature_order == 0 {
        return Err(Failure::Input("quadrature order must be positive".into()));
    }
    let f: Phi = descriptor.parse()?;
    f.validate()?;
    Ok(f.with_quadrature_order(quadrature_order))
}

fn check_s(s: f64) -> Outcome {
    if s > 0.0 && s <= 1.0 {
        Ok(())
    } else {
        Err(Failure::Input(format!("--s must lie in (0, 1], got {s}")))
    }
}

fn options(flags: &EstimationFlags) -> EstimateOptions {
    EstimateOptions { s: flags.s, seed: flags.seed, tie_policy: flags.ties.into(), ..EstimateOptions::default() }
}

fn cmd_estimate(csv: PathBuf, x_col: String, y_col: String, phi: String, flags: EstimationFlags) -> Outcome {
    let f = parse_phi(&phi, flags.quadrature_order)?;
    check_s(flags.s)?;
    let sample = read_csv(&csv, &x_col, &y_col, ReadOptions { drop_incomplete: flags.drop_incomplete })?;
    let r = estimate_with(&sample, &f, options(&flags))?;
    println!("{CSV_HEADER}");
    println!("{}", r.csv_row());
    Ok(())
}

fn cmd_true_value(model: String, phi: String, n_fine: usize, quadrature_order: usize) -> Outcome {
    let m: CopulaModel = model.parse()?;
    let f = parse_phi(&phi, quadrature_order)?;
    let t = true_lambda(&m, &f, n_fine)?;
    println!("model,phi,N,value,error_bound,converged,closed_form");
    println!(
        "{},{},{},{},{:e},{},{}",
        m.descriptor(),
        f.descriptor(),
        t.resolution,
        t.value,
        t.error_bound,
        t.converged,
        t.closed_form.map(|c| c.to_string()).unwrap_or_default()
    );
    Ok(())
}

fn cmd_simulate(config: PathBuf, out_dir: PathBuf, full: bool, workers: Option<usize>) -> Outcome {
    let mut cfg = ExperimentConfig::from_file(&config)?;
    if full {
        cfg.replications = FULL_REPLICATIONS;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    let report = simharness::run(&cfg)?;
    let truths = simharness::truths(&cfg)?;
    let summaries = simharness::summarize(&report.records, &truths);
    let plots = simharness::emit(&report.records, &summaries, &out_dir)?;
    eprintln!(
        "{} records, {} summary rows, {} plots in {}",
        report.records.len(),
        summaries.len(),
        plots.len(),
        out_dir.display()
    );
    if report.failures.is_empty() {
        Ok(())
    } else {
        for f in &report.failures {
            eprintln!("failed: {} n={} rep={}: {}", f.model, f.n, f.rep, f.message);
        }
        Err(Failure::Runtime(format!("{} replications failed", report.failures.len())))
    }
}

fn cmd_rank(csv: PathBuf, y_col: String, phis: String, flags: EstimationFlags) -> Outcome {
    let fs = phis
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|d| parse_phi(d, flags.quadrature_order))
        .collect::<Result<Vec<_>, _>>()?;
    if fs.is_empty() {
        return Err(Failure::Input("no convex function given".into()));
    }
    check_s(flags.s)?;
    let table = read_table(&csv, &y_col, ReadOptions { drop_incomplete: flags.drop_incomplete })?;
    let predictors: Vec<String> = table.exogenous().map(str::to_string).collect();
    if predictors.is_empty() {
        return Err(Failure::Input("the table has no predictor columns".into()));
    }

    println!("variable,phi,N,value");
    let mut orderings: Vec<(String, Vec<String>)> = Vec::new();
    for f in &fs {
        let mut scored = Vec::with_capacity(predictors.len());
        for x in &predictors {
            let r = estimate_with(&table.pair(x)?, f, options(&flags))?;
            println!("{x},{},{},{}", r.phi, r.resolution, r.value);
            scored.push((x.clone(), r.value));
        }
        // Stable: equal estimates keep column order.
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        orderings.push((f.descriptor(), scored.into_iter().map(|(x, _)| x).collect()));
    }
    println!();
    println!("phi,ordering");
    for (phi, order) in &orderings {
        println!("{phi},{}", order.join(";"));
    }
    let coincide = orderings.windows(2).all(|w| w[0].1 == w[1].1);
    println!("orderings_coincide,{coincide}");
    Ok(())
}

fn cmd_oracle_check(cases: usize, seed: u64, grid: usize, max_n: usize, tolerance: f64) -> Outcome {
    if max_n < 2 {
        return Err(Failure::Input("--max-n must be at least 2".into()));
    }
    let phis = Phi::study_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut worst_case = String::new();
    for case in 0..cases {
        let n = rng.random_range(2..=max_n);
        let components = rng.random_range(1..=6);
        let cb = Checkerboard::random(n, components, rng.random());
        let back = Checkerboard::from_text(&cb.to_text())?;
        if back != cb {
            return Err(Failure::Runtime(format!("case {case}: checkerboard text round trip is not exact")));
        }
        for f in &phis {
            let exact = lambda_phi(&back, f)?.value;
            let oracle = lambda_phi_oracle(&back, f, grid)?;
            let d = (exact - oracle).abs();
            if d > worst {
                worst = d;
                worst_case = format!("case {case} (N={n}, {})", f.descriptor());
            }
        }
    }
    println!("cases,grid,max_discrepancy,worst_case");
    println!("{cases},{grid},{worst:e},{worst_case}");
    if worst < tolerance {
        Ok(())
    } else {
        Err(Failure::Runtime(format!("max discrepancy {worst:e} exceeds {tolerance:e}")))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Estimate { csv, x_col, y_col, phi, flags } => cmd_estimate(csv, x_col, y_col, phi, flags),
        Command::TrueValue { model, phi, n_fine, quadrature_order } => {
            cmd_true_value(model, phi, n_fine, quadrature_order)
        }
        Command::Simulate { config, out_dir, full, workers } => cmd_simulate(config, out_dir, full, workers),
        Command::Rank { csv, y_col, phis, flags } => cmd_rank(csv, y_col, phis, flags),
        Command::OracleCheck { cases, seed, grid, max_n, tolerance } => {
            cmd_oracle_check(cases, seed, grid, max_n, tolerance)
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Hypothesis(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
