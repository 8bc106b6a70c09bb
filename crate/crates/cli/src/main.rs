use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use metacog::harness::{ExperimentConfig, ExperimentId};

mod commands;

/// Metacognitive tool design in a planar toy world.
#[derive(Debug, Parser)]
#[command(name = "metacog", version)]
struct Cli {
    /// JSON experiment configuration; missing fields take defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured seed list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides `out_dir` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Print nothing on success.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Design one tool for the reach task with the cross-entropy method.
    Design,
    /// Pick the best affordance combination under a world model.
    Discover {
        /// World model JSON, e.g. `world_model.json` written by `invent`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run the closed loop until the designer invents a tool.
    Invent,
    /// Let the evaluator choose from the configured toolbox.
    Select,
    /// Fit a confidence temperature.
    Calibrate {
        /// CSV with `confidence,success` columns; generated when absent.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Run one of the canned experiments.
    Experiment {
        #[arg(value_parser = parse_id)]
        id: ExperimentId,
    },
    /// Summarise an output directory.
    Report { dir: PathBuf },
}

fn parse_id(s: &str) -> Result<ExperimentId, String> {
    s.parse().map_err(|e: metacog::Error| e.to_string())
}

fn resolve(cli: &Cli) -> metacog::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seeds = vec![s];
    }
    if let Some(o) = &cli.out {
        cfg.out_dir = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> metacog::Result<String> {
    if let Command::Report { dir } = &cli.command {
        return commands::report(dir);
    }
    let cfg = resolve(cli)?;
    match &cli.command {
        Command::Design => commands::design(&cfg),
        Command::Discover { model } => commands::discover(&cfg, model.as_deref()),
        Command::Invent => commands::invent(&cfg),
        Command::Select => commands::select(&cfg),
        Command::Calibrate { input } => commands::calibrate(&cfg, input.as_deref()),
        Command::Experiment { id } => commands::experiment(&cfg, *id),
        Command::Report { .. } => unreachable!(),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(msg) => {
            if !cli.quiet || matches!(cli.command, Command::Report { .. }) {
                print!("{msg}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
