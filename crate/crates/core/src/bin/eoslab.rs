use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use eoslab::experiment::{self, default_output_dir, load_config, RunSummary};
use eoslab::scalar1d::solve_period2;
use eoslab::EosError;

#[derive(Parser)]
#[command(name = "eoslab", version, about = "Gradient descent beyond the edge of stability")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write trajectory.csv, summary.json and config.echo.json
    Run {
        config: PathBuf,
        /// Exit with status 1 when any check fails
        #[arg(long)]
        strict: bool,
        /// Output directory (defaults to the config's output_dir or eoslab-out/<experiment>)
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seed override, taking precedence over EOSLAB_SEED and the config
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Closed-form period-2 orbit of GD on (x^2 - mu)^2 / 4
    Orbit {
        #[arg(long, allow_negative_numbers = true)]
        mu: f64,
        #[arg(long, allow_negative_numbers = true)]
        eta: f64,
    },
    /// Stability condition of a 1-D objective at its minimum
    #[command(name = "check-1d")]
    Check1D {
        /// quartic, sine, quadratic or tanh_l2
        #[arg(long = "fn")]
        function: String,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        #[arg(long, default_value_t = 1.0)]
        amplitude: f64,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 0.5)]
        target: f64,
        #[arg(long = "x-bar", allow_negative_numbers = true)]
        x_bar: Option<f64>,
        /// Offset used for the learning-rate window
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
    },
    /// Run every config in a directory in parallel
    Batch {
        dir: PathBuf,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Root directory; each config writes to <out>/<file stem>
        #[arg(long, default_value = "eoslab-out")]
        out: PathBuf,
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn env_seed() -> Option<String> {
    std::env::var("EOSLAB_SEED").ok()
}

fn print_summary(summary: &RunSummary, out_dir: &Path) {
    println!(
        "{} seed={} ({:?}) -> {}",
        summary.experiment,
        summary.seed,
        summary.seed_source,
        out_dir.display()
    );
    if let Some(orbit) = &summary.detected_orbit {
        println!("  detected period: {:?}", orbit.period);
    }
    if let Some(dev) = summary.max_deviation {
        println!("  max deviation from prediction: {dev:e}");
    }
    if let Some(div) = &summary.divergence {
        println!("  divergence: {div}");
    }
    for c in &summary.checks {
        println!("  [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
}

fn run(cli: Cli) -> Result<bool, EosError> {
    match cli.command {
        Command::Run {
            config,
            strict,
            out,
            seed,
        } => {
            let env = env_seed();
            let (cfg, source) = load_config(&config, seed, env.as_deref())?;
            let out_dir = out.unwrap_or_else(|| default_output_dir(&cfg));
            let summary = experiment::run(&cfg, source, &out_dir)?;
            print_summary(&summary, &out_dir);
            Ok(!strict || summary.all_passed)
        }
        Command::Orbit { mu, eta } => {
            let p = solve_period2(mu, eta)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "mu": p.mu,
                    "eta": p.eta,
                    "eta_mu": p.eta * p.mu,
                    "x_low": p.x_low,
                    "x_high": p.x_high,
                    "ratio": p.ratio(),
                    "stability": p.stability,
                }))
                .expect("json")
            );
            Ok(true)
        }
        Command::Check1D {
            function,
            mu,
            amplitude,
            lambda,
            target,
            x_bar,
            eps,
        } => {
            let (f, default_x) = experiment::named_function(&function, mu, amplitude, lambda, target)?;
            let report = experiment::condition_report(&function, &f, x_bar.unwrap_or(default_x), eps)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("json"));
            Ok(true)
        }
        Command::Batch {
            dir,
            jobs,
            out,
            strict,
            seed,
        } => {
            let env = env_seed();
            let items = experiment::run_batch(&dir, &out, jobs, seed, env.as_deref())?;
            let mut ok = true;
            let mut errors = 0;
            for item in &items {
                match &item.result {
                    Ok(summary) => {
                        print_summary(summary, &item.out_dir);
                        ok &= summary.all_passed;
                    }
                    Err(e) => {
                        eprintln!("{}: {e}", item.config.display());
                        errors += 1;
                    }
                }
            }
            println!("{} configs, {} errors", items.len(), errors);
            if errors > 0 {
                return Err(EosError::Io(format!("{errors} batch entries failed")));
            }
            Ok(!strict || ok)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
