//! Parses a config in the line format, runs it and writes the three output
//! files to a temporary directory.

use eoslab::experiment::{parse_config, run, SeedSource, SUMMARY_FILE, TRAJECTORY_FILE};

const CONFIG: &str = "
# 2-cycle of the quartic at eta*mu = 1.05
[oscillate1d]
mu = 1
eta = 1.05
x0 = 0.5
steps = 2000
seed = 1
";

fn main() -> eoslab::Result<()> {
    let cfg = parse_config(CONFIG)?;
    let dir = std::env::temp_dir().join("eoslab-example");
    let summary = run(&cfg, SeedSource::Config, &dir)?;
    println!("wrote {} and {} to {}", TRAJECTORY_FILE, SUMMARY_FILE, dir.display());
    println!("config hash {}", summary.config_hash);
    for c in &summary.checks {
        println!("{:<26} {}  {}", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
    }
    Ok(())
}
