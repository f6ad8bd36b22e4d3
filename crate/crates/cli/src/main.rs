//! Batch experiment harness: load a scenario config, run the placement
//! sweep, the sharing benchmark, or the self-check suite, and emit
//! deterministic CSV.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use edgecare_core::config::ScenarioConfig;
use edgecare_core::harness::{
    bench_csv, offload_sweep, parse_weights, share_bench, sweep_csv, verify,
};
use edgecare_core::offload::CostWeights;
use edgecare_core::sim::NetworkMode;

#[derive(Parser)]
#[command(
    name = "edgecare",
    about = "Deterministic hospital edge-network simulator and experiment harness",
    version
)]
struct Cli {
    /// Override the config's RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep placement cost over file sizes and schemes, emitting one
    /// CSV row per (weights, size, scheme).
    OffloadSweep {
        /// Scenario config file (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Weight triple alpha_t,alpha_e,alpha_m; fractions like 1/3
        /// allowed. Repeat for multiple sets.
        #[arg(long, required = true)]
        weights: Vec<String>,
        /// Write offload_sweep.csv here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Benchmark the sharing protocol across network modes and request
    /// counts, emitting one CSV row per (count, mode).
    ShareBench {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated modes:
        /// decentralized,dht,central-authority,central-cloud.
        #[arg(
            long,
            default_value = "decentralized,dht,central-authority,central-cloud"
        )]
        modes: String,
        /// Write share_bench.csv here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the property suite and print one PASS/FAIL line per check.
    Verify {
        #[arg(long)]
        config: PathBuf,
        /// Flip one stored bit before the integrity check (the check
        /// must then fail and the exit code must be nonzero).
        #[arg(long)]
        inject_tamper: bool,
    },
}

fn load_config(path: &PathBuf, seed_override: Option<u64>) -> Result<(ScenarioConfig, u64)> {
    let cfg = ScenarioConfig::from_path(path)
        .with_context(|| format!("loading config {}", path.display()))?;
    let seed = seed_override.unwrap_or(cfg.seed);
    Ok((cfg, seed))
}

fn emit(csv: String, out: Option<PathBuf>, filename: &str) -> Result<()> {
    match out {
        Some(dir) => {
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(filename);
            std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
            eprintln!("wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run() -> Result<ExitCode> {
    let cli = Cli::parse();
    match cli.command {
        Command::OffloadSweep {
            config,
            weights,
            out,
        } => {
            let (cfg, seed) = load_config(&config, cli.seed)?;
            let sets: Vec<CostWeights> = weights
                .iter()
                .map(|w| parse_weights(w).map_err(anyhow::Error::msg))
                .collect::<Result<_>>()?;
            let rows = offload_sweep(&cfg, &sets, seed)?;
            emit(sweep_csv(&rows), out, "offload_sweep.csv")?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ShareBench { config, modes, out } => {
            let (cfg, seed) = load_config(&config, cli.seed)?;
            let modes: Vec<NetworkMode> = modes
                .split(',')
                .filter(|m| !m.trim().is_empty())
                .map(|m| m.trim().parse().map_err(anyhow::Error::msg))
                .collect::<Result<_>>()?;
            if modes.is_empty() {
                bail!("at least one mode required");
            }
            let rows = share_bench(&cfg, &modes, seed)?;
            emit(bench_csv(&rows), out, "share_bench.csv")?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify {
            config,
            inject_tamper,
        } => {
            let (cfg, seed) = load_config(&config, cli.seed)?;
            let report = verify(&cfg, seed, inject_tamper);
            print!("{}", report.render());
            Ok(if report.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}
