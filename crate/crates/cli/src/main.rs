//! `gemon`: experiment harness for the display-policy model.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use crate::commands::Outcome;
use crate::config::ExperimentConfig;
use crate::output::{unix_now, versions, Manifest, Staging};

/// Environment variable naming the default output root.
const OUT_ROOT_ENV: &str = "GEMON_OUT_ROOT";

#[derive(Debug, Parser)]
#[command(name = "gemon", version, about = "Ad vs. ad-free display policy solver and market simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML). `market.beta` is required.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; defaults to `$GEMON_OUT_ROOT/<command>` or `runs/<command>`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Comma-separated seed list, overriding the config.
    #[arg(long, global = true, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Value iteration for the configured types; writes value and edge tables.
    Solve,
    /// Simulate `simulation.policy` over every seed.
    Simulate,
    /// Simulate all four policies on common random numbers.
    Compare,
    /// Conditions x policies x seeds ablation.
    Ablate,
    /// Re-solve along a parameter grid and judge the edge's direction.
    Sweep {
        /// One of omega, beta, kappa_free, kappa_paid, price, gamma, psi, r; overrides `sweep.param`
        #[arg(long)]
        param: Option<String>,
        /// Comma-separated grid values; overrides `sweep.grid`
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        grid: Option<Vec<f64>>,
    },
    /// Type cutoffs by pre-scan and bisection, plus an optional action map.
    Cutoff,
    /// Plug-in learning from synthetic logs and the robustness bounds.
    Learn,
    /// Welfare solve and welfare/revenue alignment check.
    Welfare,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Simulate => "simulate",
            Command::Compare => "compare",
            Command::Ablate => "ablate",
            Command::Sweep { .. } => "sweep",
            Command::Cutoff => "cutoff",
            Command::Learn => "learn",
            Command::Welfare => "welfare",
        }
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_deref()
        .context("--config <path> is required")?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seeds) = &cli.seeds {
        cfg.seeds = seeds.clone();
    }
    if let Command::Sweep { param, grid } = &cli.command {
        if param.is_some() {
            cfg.sweep.param = param.clone();
        }
        if grid.is_some() {
            cfg.sweep.grid = grid.clone();
        }
    }
    let source = path.display().to_string();
    cfg.validate().map_err(|e| gemon_core::ConfigError::Invalid { path: source, source: e })?;
    Ok(cfg)
}

fn out_dir(cli: &Cli, cfg: &ExperimentConfig) -> PathBuf {
    if let Some(out) = &cli.out {
        return out.clone();
    }
    if let Some(out) = &cfg.out_dir {
        return out.clone();
    }
    let root = std::env::var_os(OUT_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    root.join(cli.command.name())
}

fn dispatch(command: &Command, cfg: &ExperimentConfig, out: &mut Staging) -> Result<Outcome> {
    match command {
        Command::Solve => commands::solve(cfg, out),
        Command::Simulate => commands::simulate(cfg, out),
        Command::Compare => commands::compare(cfg, out),
        Command::Ablate => commands::ablate(cfg, out),
        Command::Sweep { .. } => commands::sweep(cfg, out),
        Command::Cutoff => commands::cutoff(cfg, out),
        Command::Learn => commands::learn(cfg, out),
        Command::Welfare => commands::welfare(cfg, out),
    }
}

fn run(cli: &Cli) -> Result<u8> {
    let started = unix_now();
    let clock = Instant::now();
    let cfg = load(cli)?;
    let threads = cli.threads.unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .context("building the worker pool")?;
    let target = out_dir(cli, &cfg);
    let mut staging = Staging::new(&target)?;
    let outcome = match pool.install(|| dispatch(&cli.command, &cfg, &mut staging)) {
        Ok(o) => o,
        Err(e) => {
            staging.discard();
            return Err(e);
        }
    };
    let code = if outcome.violated() { 2 } else { 0 };
    let manifest = Manifest {
        command: cli.command.name(),
        config_path: cli.config.as_deref().map(|p: &Path| p.display().to_string()),
        config: &cfg,
        seeds: &cfg.seeds,
        threads,
        versions: versions(),
        started_unix_secs: started,
        wall_time_secs: clock.elapsed().as_secs_f64(),
        exit_code: code,
        verdicts: outcome.verdicts.clone(),
        files: staging.files().to_vec(),
    };
    staging.write("manifest.json", &serde_json::to_string_pretty(&manifest)?)?;
    let dir = staging.promote()?;
    for line in &outcome.lines {
        println!("{line}");
    }
    println!("wrote {}", dir.display());
    Ok(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            // Skip causes whose text the outer message already repeats.
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
