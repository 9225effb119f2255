use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use discosde::coefficients::{validate_conditions, SampleSpec};
use discosde::harness::{fit_log2_rate, parse_csv, run_experiment, ExperimentConfig};
use discosde::transform::check_invariants;
use discosde::{Error, Result, TransformedProblem};

/// Points sampled by `validate` for the transform invariants.
const INVARIANT_SAMPLES: usize = 10_000;

#[derive(Parser)]
#[command(name = "discosde", version, about = "Strong approximation of SDEs with discontinuous drift")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo error experiment and write the CSV table.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        threads: Option<usize>,
        /// Defaults to the config's `output`, else stdout.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Sample the coefficient conditions and the transform invariants.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print the fitted rates of an experiment CSV.
    Rates { csv: PathBuf },
}

fn run(config: &Path, seed: Option<u64>, threads: Option<usize>, output: Option<PathBuf>) -> Result<()> {
    let mut cfg = ExperimentConfig::from_file(config)?;
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    if let Some(threads) = threads {
        cfg.threads = threads;
    }
    let table = run_experiment(&cfg)?;
    let csv = table.to_csv();
    match output.or(cfg.output) {
        Some(path) => std::fs::write(&path, csv).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?,
        None => print!("{csv}"),
    }
    if table.aborted > 0 {
        eprintln!("{} of {} repetitions aborted", table.aborted, cfg.reps);
    }
    for r in &table.rates {
        eprintln!("{} p={}: rate {:.4} (r2 {:.4})", table.scheme, r.p, r.rate, r.r_squared);
    }
    Ok(())
}

fn validate(config: &Path) -> Result<bool> {
    let cfg = ExperimentConfig::from_file(config)?;
    let problem = &cfg.problem;
    let conditions = validate_conditions(problem, &SampleSpec::default());
    println!("problem {} (d = {})", cfg.problem_name, problem.dim());
    if let Some(v) = conditions.inf_normal_sigma_theta {
        println!("inf |sigma^T n| on theta: {v}");
    }
    if let Some(v) = conditions.inf_normal_sigma_delta {
        println!("inf |sigma^T n| on delta: {v}");
    }
    println!("growth constant: {}", conditions.growth_constant);
    for v in &conditions.violations {
        println!("violation: {v}");
    }
    let mut ok = conditions.passed();
    if !problem.theta.is_empty() {
        let tf = TransformedProblem::new(problem.clone(), cfg.transform)?;
        let r = check_invariants(&tf, INVARIANT_SAMPLES, cfg.seed)?;
        println!("epsilon {} (sup |alpha| {})", tf.epsilon(), tf.alpha_sup());
        println!("max |Phi| / eps^2: {}", r.phi_ratio);
        println!("max |Phi'| / (112 eps): {}", r.grad_ratio);
        println!("identity failures: {}", r.identity_failures);
        println!("jacobian relative error: {:e}", r.jacobian_rel_err);
        println!("inverse round trip: {:e}", r.round_trip_err);
        println!("sigma_G - sigma on theta: {:e}", r.sigma_on_theta_err);
        println!("sigma_G commutativity residual: {:e}", r.commutativity_residual);
        ok &= r.passed();
    }
    println!("{}", if ok { "ok" } else { "FAILED" });
    Ok(ok)
}

fn rates(csv: &Path) -> Result<()> {
    let text = std::fs::read_to_string(csv).map_err(|e| Error::Io(format!("{}: {e}", csv.display())))?;
    let parsed = parse_csv(&text)?;
    if !parsed.rates.is_empty() {
        for (p, rate, r2) in parsed.rates {
            println!("p={p}: rate {rate} (r2 {r2})");
        }
        return Ok(());
    }
    // No stored fits: refit per scheme, problem and p.
    let mut groups: Vec<(&str, &str, f64)> = Vec::new();
    for r in &parsed.rows {
        let key = (r.scheme.as_str(), r.problem.as_str(), r.p);
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    for (scheme, problem, p) in groups {
        let (ns, errors): (Vec<usize>, Vec<f64>) = parsed
            .rows
            .iter()
            .filter(|r| r.scheme == scheme && r.problem == problem && r.p == p)
            .map(|r| (r.n, r.error))
            .unzip();
        let fit = fit_log2_rate(&ns, &errors, p)?;
        println!("{scheme} {problem} p={p}: rate {} (r2 {})", fit.rate, fit.r_squared);
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, seed, threads, output } => run(&config, seed, threads, output).map(|_| true),
        Command::Validate { config } => validate(&config),
        Command::Rates { csv } => rates(&csv).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
