//! Experiment driver: panel validation, value queries, PDE evaluation,
//! convergence sweeps, strategy matchups and local cell sweeps.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use bruijn_regret::{Engine, ExpertPanel};
use clap::{Parser, Subcommand};

use crate::config::{ExperimentConfig, PanelSource};
use crate::output::Meta;

#[derive(Parser, Debug)]
#[command(name = "bruijn-regret", version, about = "Regret games over de Bruijn history graphs")]
struct Cli {
    /// Experiment config file (`key = value` lines, `[section]` headers).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_parser = parse_engine)]
    engine: Option<Engine>,
    /// Gauss-Hermite order for the PDE solution instead of the default rule.
    #[arg(long = "quad-order", global = true)]
    quad_order: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print panel diagnostics; exit code 1 unless both assumptions hold.
    Validate {
        /// Panel file. Defaults to the configured panel.
        panel: Option<PathBuf>,
    },
    /// Print the game value and optimal first move as JSON.
    Value,
    /// Evaluate the PDE solution at the configured probes into pde.csv.
    Pde,
    /// Sweep horizons against the PDE solution into converge.csv.
    Converge,
    /// Play strategy matchups and write trajectories plus summary.json.
    Simulate,
    /// Sweep the local cell problem into local.csv.
    Local,
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    s.parse().map_err(|e: bruijn_regret::Error| e.to_string())
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    if cli.engine.is_some() {
        cfg.engine = cli.engine;
    }
    if cli.quad_order.is_some() {
        cfg.quad_order = cli.quad_order;
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<ExitCode> {
    let mut cfg = load_config(cli)?;
    if let Command::Validate { panel: Some(path) } = &cli.command {
        cfg.panel = PanelSource::File(path.clone());
    }
    let panel: ExpertPanel = cfg.panel.load()?;
    let meta = Meta::new(&cfg);
    let dir = cfg.out_dir.clone();
    match &cli.command {
        Command::Validate { .. } => {
            return Ok(if commands::validate(&panel) { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
        Command::Value => print!("{}", commands::value_report(&cfg, &panel)?),
        Command::Pde => output::write(&dir, "pde.csv", &commands::pde(&cfg, &panel, &meta)?)?,
        Command::Converge => {
            let (csv, summary) = commands::converge(&cfg, &panel, &meta)?;
            output::write(&dir, "converge.csv", &csv)?;
            output::write(&dir, "converge_summary.json", &summary)?;
        }
        Command::Simulate => {
            let (files, summary) = commands::simulate_runs(&cfg, &panel, &meta)?;
            for (name, text) in &files {
                output::write(&dir, name, text)?;
            }
            output::write(&dir, "summary.json", &summary)?;
        }
        Command::Local => output::write(&dir, "local.csv", &commands::local(&cfg, &panel, &meta)?)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
