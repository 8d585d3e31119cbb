//! Command-line front end for `mmaf-core`: scenario runs, conditioning and
//! direction experiments, and the acceptance suite.

pub mod commands;
pub mod config;
pub mod error;
pub mod io;
pub mod verify;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{FileConfig, Overrides, ScenarioConfig};
use crate::error::{CliError, CliResult};
use crate::io::OutDir;
use crate::verify::{Level, CRITERIA};

#[derive(Debug, Parser)]
#[command(name = "mmaf-lab", version, about = "Simulate and check mass-weighted coalescing flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// TOML scenario file.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads (default: available cores).
    #[arg(long, value_name = "K")]
    pub workers: Option<usize>,
    /// Ensemble size.
    #[arg(long, value_name = "N")]
    pub samples: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Flow paths, event logs, bases, remainders and a QV report.
    Simulate(Common),
    /// eps-conditioned driving paths against the direct flow.
    Condition(Common),
    /// OU direction ladder diagnostics.
    Directions(Common),
    /// Brownian bridge moment check.
    Bridge(Common),
    /// Run the acceptance suite.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Full sample sizes instead of the smoke run.
        #[arg(long)]
        full: bool,
        /// Print the criteria and exit.
        #[arg(long)]
        list: bool,
    },
}

fn resolve(common: &Common) -> CliResult<ScenarioConfig> {
    let file = match &common.config {
        Some(path) => config::load_file(path)?,
        None => FileConfig::default(),
    };
    let over = Overrides {
        seed: common.seed,
        out: common.out.clone(),
        samples: common.samples,
    };
    ScenarioConfig::resolve(file, &over)
}

fn workers(common: &Common) -> CliResult<usize> {
    match common.workers {
        Some(0) => Err(CliError::config("workers", "must be at least 1")),
        Some(k) => Ok(k),
        None => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::config("workers", e))?;
    pool.install(f)
}

fn run_verify(common: &Common, full: bool) -> CliResult<()> {
    let cfg = resolve(common)?;
    let k = workers(common)?;
    let out = OutDir::create(&cfg.out)?;
    let level = if full { Level::Full } else { Level::Smoke };
    let ids: Vec<u8> = (1..=10).collect();
    let mut results = in_pool(k, || verify::run_criteria(level, cfg.seed, &ids))?;
    results.push(verify::reproducibility(cfg.seed, 1, k.max(2))?);
    for r in &results {
        println!("{}", r.line());
    }
    out.write_json("verify_report.json", &results)?;
    out.write_json("resolved_config.json", &cfg)?;
    out.write_metadata(if full { "verify --full" } else { "verify" }, k)?;
    let failing: Vec<String> = results
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("criterion {}", r.id))
        .collect();
    if failing.is_empty() {
        Ok(())
    } else {
        Err(CliError::Acceptance(failing))
    }
}

fn dispatch(cli: Cli) -> CliResult<()> {
    type Cmd = fn(&ScenarioConfig, &OutDir, usize) -> CliResult<Vec<mmaf_core::stats::TestReport>>;
    let (common, cmd): (&Common, Cmd) = match &cli.command {
        Command::Simulate(c) => (c, commands::cmd_simulate),
        Command::Condition(c) => (c, commands::cmd_condition),
        Command::Directions(c) => (c, commands::cmd_directions),
        Command::Bridge(c) => (c, commands::cmd_bridge),
        Command::Verify { list: true, .. } => {
            for c in &CRITERIA {
                println!("{:>2}  {}", c.id, c.title);
            }
            return Ok(());
        }
        Command::Verify { common, full, .. } => return run_verify(common, *full),
    };
    let cfg = resolve(common)?;
    let k = workers(common)?;
    let out = OutDir::create(&cfg.out)?;
    in_pool(k, || cmd(&cfg, &out, k))?;
    Ok(())
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
