//! Config-driven experiments: parsing, execution, output files and batches.

mod config;
mod runners;

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::*;
pub use runners::{condition_report, named_function, stage_ordering, ConditionReport, StageOrdering};

use crate::dynamics::OrbitReport;
use crate::error::{EosError, Result};

pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ECHO_FILE: &str = "config.echo.json";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectedOrbit {
    pub period: Option<usize>,
    pub points: Vec<Vec<f64>>,
    pub residual: f64,
    pub settled_at: Option<usize>,
}

impl From<OrbitReport> for DetectedOrbit {
    fn from(r: OrbitReport) -> Self {
        DetectedOrbit {
            period: r.period,
            points: r.orbit_points,
            residual: r.residual,
            settled_at: r.settled_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Column {
    Num(Vec<f64>),
    Text(Vec<String>),
}

impl Column {
    fn len(&self) -> usize {
        match self {
            Column::Num(v) => v.len(),
            Column::Text(v) => v.len(),
        }
    }
}

/// Named columns written as `trajectory.csv`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub columns: Vec<(String, Column)>,
}

impl Table {
    pub fn push_num(&mut self, name: &str, values: Vec<f64>) {
        self.columns.push((name.to_string(), Column::Num(values)));
    }

    pub fn push_text(&mut self, name: &str, values: Vec<String>) {
        self.columns.push((name.to_string(), Column::Text(values)));
    }

    pub fn rows(&self) -> usize {
        self.columns.iter().map(|(_, c)| c.len()).max().unwrap_or(0)
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.columns.iter().find(|(n, _)| n == name).map(|(_, c)| c)
    }

    /// Floats use the shortest representation that round-trips.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let header: Vec<&str> = self.columns.iter().map(|(n, _)| n.as_str()).collect();
        out.push_str(&header.join(","));
        out.push('\n');
        for r in 0..self.rows() {
            for (i, (_, col)) in self.columns.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match col {
                    Column::Num(v) => {
                        if let Some(x) = v.get(r) {
                            let _ = write!(out, "{x}");
                        }
                    }
                    Column::Text(v) => {
                        if let Some(s) = v.get(r) {
                            out.push_str(s);
                        }
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub version: String,
    pub experiment: String,
    /// SHA-256 of the compact config echo
    pub config_hash: String,
    pub seed: u64,
    pub seed_source: SeedSource,
    pub config: serde_json::Value,
    pub detected_orbit: Option<DetectedOrbit>,
    pub predicted_orbit: Option<serde_json::Value>,
    pub max_deviation: Option<f64>,
    pub divergence: Option<String>,
    pub checks: Vec<Check>,
    pub metrics: BTreeMap<String, f64>,
    pub all_passed: bool,
    pub wall_time_s: f64,
}

impl RunSummary {
    pub fn failed_checks(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub table: Table,
}

impl RunOutput {
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(TRAJECTORY_FILE), self.table.to_csv())?;
        fs::write(dir.join(SUMMARY_FILE), to_pretty(&self.summary)? + "\n")?;
        fs::write(dir.join(ECHO_FILE), to_pretty(&self.summary.config)? + "\n")?;
        Ok(())
    }
}

fn to_pretty<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| EosError::Io(e.to_string()))
}

pub fn config_hash(echo: &serde_json::Value) -> String {
    let compact = serde_json::to_string(echo).expect("echo serializes");
    format!("{:x}", Sha256::digest(compact.as_bytes()))
}

/// Runs the experiment in memory. Divergence is reported in the summary,
/// not as an error.
pub fn execute(cfg: &ExperimentConfig, seed_source: SeedSource) -> Result<RunOutput> {
    let start = Instant::now();
    let report = runners::dispatch(cfg)?;
    let echo = cfg.echo();
    let all_passed = report.checks.iter().all(|c| c.passed);
    let summary = RunSummary {
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: cfg.experiment.name().to_string(),
        config_hash: config_hash(&echo),
        seed: cfg.seed,
        seed_source,
        config: echo,
        detected_orbit: report.detected,
        predicted_orbit: report.predicted,
        max_deviation: report.max_deviation,
        divergence: report.divergence,
        checks: report.checks,
        metrics: report.metrics,
        all_passed,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok(RunOutput {
        summary,
        table: report.table,
    })
}

/// Executes and writes `trajectory.csv`, `summary.json` and
/// `config.echo.json` into `out_dir`.
pub fn run(cfg: &ExperimentConfig, seed_source: SeedSource, out_dir: &Path) -> Result<RunSummary> {
    let out = execute(cfg, seed_source)?;
    out.write(out_dir)?;
    Ok(out.summary)
}

/// Reads and parses a config file, then applies the seed precedence.
pub fn load_config(path: &Path, cli_seed: Option<u64>, env_seed: Option<&str>) -> Result<(ExperimentConfig, SeedSource)> {
    let text = fs::read_to_string(path).map_err(|e| EosError::Io(format!("{}: {e}", path.display())))?;
    let mut cfg = parse_config(&text).map_err(|e| match e {
        EosError::Config { location, message } => EosError::Config {
            location: format!("{}, {location}", path.display()),
            message,
        },
        other => other,
    })?;
    let (seed, source) = resolve_seed(cfg.seed, cli_seed, env_seed)?;
    cfg.seed = seed;
    Ok((cfg, source))
}

/// Output directory used when neither the CLI nor the config names one.
pub fn default_output_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("eoslab-out").join(cfg.experiment.name()))
}

#[derive(Debug)]
pub struct BatchItem {
    pub config: PathBuf,
    pub out_dir: PathBuf,
    pub result: Result<RunSummary>,
}

/// Config files in `dir` (`*.toml`, `*.json`, `*.cfg`, `*.conf`), sorted.
pub fn batch_configs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e, "toml" | "json" | "cfg" | "conf"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Runs every config in `dir` on `jobs` worker threads. Each run writes to
/// `out_root/<file stem>`. Results come back in file order.
pub fn run_batch(
    dir: &Path,
    out_root: &Path,
    jobs: usize,
    cli_seed: Option<u64>,
    env_seed: Option<&str>,
) -> Result<Vec<BatchItem>> {
    let files = batch_configs(dir)?;
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<BatchItem>>> = files.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(files.len().max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(path) = files.get(i) else { break };
                let stem = path.file_stem().map_or_else(|| format!("run{i}"), |s| s.to_string_lossy().into_owned());
                let out_dir = out_root.join(stem);
                let result = load_config(path, cli_seed, env_seed)
                    .and_then(|(cfg, source)| run(&cfg, source, &out_dir));
                *slots[i].lock().expect("slot lock") = Some(BatchItem {
                    config: path.clone(),
                    out_dir,
                    result,
                });
            });
        }
    });
    Ok(slots
        .into_iter()
        .map(|m| m.into_inner().expect("slot lock").expect("every slot filled"))
        .collect())
}
