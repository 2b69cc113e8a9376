use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bisparc_core::config::{sigma2_for_eb_n0_db, validate};
use bisparc_core::harness::{self, Axis, SweepSpec, TARGET_PE};
use bisparc_core::SystemConfig;
use clap::{Args, Parser, Subcommand};

/// BiSPARC unsourced random access simulator.
#[derive(Debug, Parser)]
#[command(name = "bisparc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario file of `key = value` lines; unset keys keep the DS-1 defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "BISPARC_WORKERS", default_value_t = 0)]
    workers: usize,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scenario label written to the CSV.
    #[arg(long, default_value = "ds1")]
    scenario: String,
    /// Write 0 in the wall_time_s column so reruns are byte-identical.
    #[arg(long)]
    no_wall_time: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a single scenario at its configured Eb/N0.
    Run {
        #[command(flatten)]
        common: Common,
        /// Override the Eb/N0 (dB) by setting the noise variance.
        #[arg(long)]
        eb_n0_db: Option<f64>,
    },
    /// Sweep one axis of the scenario.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// eb_n0_db, M or K.
        #[arg(long, default_value = "eb_n0_db")]
        axis: String,
        /// Comma-separated axis values.
        #[arg(long)]
        values: String,
    },
    /// Smallest Eb/N0 on a grid that reaches the target PUPE.
    Threshold {
        #[command(flatten)]
        common: Common,
        /// Comma-separated ascending Eb/N0 grid in dB.
        #[arg(long)]
        values: String,
        #[arg(long, default_value_t = TARGET_PE)]
        target: f64,
    },
    /// Run the built-in invariant checks.
    Selftest {
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn load(common: &Common) -> Result<SystemConfig> {
    let mut cfg = match &common.config {
        Some(path) => SystemConfig::from_file(path).with_context(|| format!("reading {}", path.display()))?,
        None => SystemConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.trials = trials;
    }
    validate(&cfg)?;
    Ok(cfg)
}

fn sweep(common: &Common, cfg: SystemConfig, axis: Axis) -> Result<harness::SweepResult> {
    let mut spec = SweepSpec::new(common.scenario.clone(), cfg.clone(), axis, cfg.trials);
    spec.out = common.out.clone();
    spec.record_wall_time = !common.no_wall_time;
    Ok(harness::run_sweep(&spec, common.workers)?)
}

fn report(result: &harness::SweepResult, target: f64) -> Result<()> {
    if result.rows().is_empty() {
        bail!("no sweep points");
    }
    print!("{}", harness::csv_string(&result.rows())?);
    for row in result.rows() {
        let verdict = if row.meets(target) { "meets" } else { "misses" };
        eprintln!("{} = {}: pupe {:.4} ± {:.4} {verdict} target {target}", row.axis_name, row.axis_value, row.pupe_mean, row.pupe_ci95);
    }
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { common, eb_n0_db } => {
            let mut cfg = load(&common)?;
            if let Some(db) = eb_n0_db {
                cfg.sigma2 = sigma2_for_eb_n0_db(&cfg, db);
            }
            let db = bisparc_core::config::eb_n0_db(&cfg);
            let result = sweep(&common, cfg, Axis::EbN0Db(vec![db]))?;
            report(&result, TARGET_PE)?;
        }
        Command::Sweep { common, axis, values } => {
            let cfg = load(&common)?;
            let axis = Axis::parse(&axis, &values)?;
            let result = sweep(&common, cfg, axis)?;
            report(&result, TARGET_PE)?;
        }
        Command::Threshold { common, values, target } => {
            let cfg = load(&common)?;
            let Axis::EbN0Db(grid) = Axis::parse("eb_n0_db", &values)? else { unreachable!() };
            if grid.windows(2).any(|w| w[0] > w[1]) {
                bail!("Eb/N0 grid must be ascending");
            }
            let result = sweep(&common, cfg, Axis::EbN0Db(grid))?;
            report(&result, target)?;
            println!("required_eb_n0: {}", harness::threshold_of(&result.rows(), target));
        }
        Command::Selftest { seed } => {
            let checks = bisparc_core::selftest::run_all(seed)?;
            let mut ok = true;
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                ok &= c.passed;
            }
            if !ok {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
