use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sysid_cli::commands;
use sysid_cli::error::EXIT_CONFIG;
use sysid_cli::report::consolidate_dirs;
use sysid_cli::{CliError, CliResult, Mode, ScenarioConfig};

#[derive(Parser)]
#[command(name = "sysid", version, about = "Planar humanoid simulation and system identification")]
struct Cli {
    /// Scenario file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the scenario's output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Overrides every seed in the scenario.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate unloaded and loaded trajectories of the perturbed robot.
    Generate,
    /// Apply the stance-foot correction to the raw trajectories.
    Process,
    /// Estimate parameters from the recorded trajectories.
    Identify {
        #[arg(long, value_enum)]
        mode: Mode,
        /// Inclusive seed range, e.g. `1..5`.
        #[arg(long, value_parser = parse_seeds)]
        seeds: Option<RangeInclusive<u64>>,
    },
    /// Compare forward-mode gradients with central differences.
    VerifyGrad {
        #[arg(long, default_value_t = 20)]
        pairs: usize,
        #[arg(long, default_value_t = 50)]
        horizon: usize,
    },
    /// Consolidate identification reports into text and CSV tables.
    Report {
        /// Run directories; defaults to the scenario's output directory.
        runs: Vec<PathBuf>,
    },
}

fn parse_seeds(s: &str) -> Result<RangeInclusive<u64>, String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected a..b, got '{s}'"))?;
    let a: u64 = a.trim().parse().map_err(|e| format!("bad seed '{a}': {e}"))?;
    let b: u64 = b.trim().parse().map_err(|e| format!("bad seed '{b}': {e}"))?;
    if a > b {
        return Err(format!("empty seed range {a}..{b}"));
    }
    Ok(a..=b)
}

fn scenario(cli: &Cli) -> CliResult<ScenarioConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = ScenarioConfig::load(path)?.with_seed(cli.seed);
    if let Some(out) = &cli.output {
        cfg.output_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> CliResult<String> {
    match &cli.command {
        Command::Generate => commands::generate(&scenario(cli)?),
        Command::Process => commands::process(&scenario(cli)?),
        Command::Identify { mode, seeds } => {
            let seeds: Vec<u64> = seeds.clone().map(|r| r.collect()).unwrap_or_default();
            commands::identify(&scenario(cli)?, *mode, &seeds)
        }
        Command::VerifyGrad { pairs, horizon } => {
            let cfg = scenario(cli)?;
            commands::verify_grad(&cfg, *pairs, *horizon, cli.seed.unwrap_or(cfg.noise.seed)).map(|(text, _)| text)
        }
        Command::Report { runs } => {
            let runs = if runs.is_empty() { vec![scenario(cli)?.output_dir] } else { runs.clone() };
            let refs: Vec<&std::path::Path> = runs.iter().map(|p| p.as_path()).collect();
            let report = consolidate_dirs(&refs)?;
            let dest = cli.output.clone().unwrap_or_else(|| runs[0].clone());
            report.write(&dest)?;
            Ok(report.to_text())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
