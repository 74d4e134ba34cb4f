//! `raman`: reproducible runs of the driven transmon-resonator pipelines.
//!
//! Exit codes: 0 success, 1 config error, 2 numeric failure, 3 fit failure.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "raman", version, about = "Driven transmon-resonator experiments: couplings, Stark shifts, swaps, fits")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for sweeps (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// g̃(Ω): first order, exact, and the Λ-system reference.
    Spectrum,
    /// Stark shift Δ_f0g1(Ω): exact sweep and resolvent orders.
    Stark,
    /// π-pulse fidelity sweep and trajectory.
    Dynamics,
    /// Fit a transmission trace for g̃.
    Fit,
    /// Drive-power calibration from Stark-shift data.
    Calibrate,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Stark => "stark",
            Command::Dynamics => "dynamics",
            Command::Fit => "fit",
            Command::Calibrate => "calibrate",
        }
    }
}

fn execute(cli: &Cli) -> CliResult<()> {
    let path = cli.config.as_ref().ok_or_else(|| error::config_err("--config <path> is required"))?;
    let cfg = RunConfig::load(path)?;
    let seed = cli.seed.unwrap_or(cfg.seed);
    if cli.workers == Some(0) {
        return Err(error::config_err("--workers must be at least 1"));
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| error::config_err(format!("worker pool: {e}")))?;
    std::fs::create_dir_all(&cli.out)?;

    let start = Instant::now();
    let out = cli.out.as_path();
    let files = pool.install(|| match cli.command {
        Command::Spectrum => commands::spectrum(&cfg, out),
        Command::Stark => commands::stark(&cfg, out),
        Command::Dynamics => commands::dynamics(&cfg, out),
        Command::Fit => commands::fit(&cfg, out, seed),
        Command::Calibrate => commands::calibrate(&cfg, out),
    })?;
    let run = manifest::RunInfo {
        subcommand: cli.command.name(),
        config_path: path,
        config: &cfg,
        seed,
        workers: pool.current_num_threads(),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    let m = manifest::write(out, &run, &files)?;
    for f in &files {
        println!("{}", out.join(f).display());
    }
    println!("{}", m.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::CliError;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 1);
        assert_eq!(CliError::Core(raman_core::Error::Detection("x".into())).exit_code(), 3);
        assert_eq!(CliError::Core(raman_core::Error::Fit { message: "x".into(), residual_history: vec![] }).exit_code(), 3);
        assert_eq!(CliError::Core(raman_core::Error::Singularity("x".into())).exit_code(), 2);
    }

    #[test]
    fn parses_flags() {
        let cli = Cli::try_parse_from(["raman", "stark", "--config", "c.json", "--out", "o", "--seed", "7", "--workers", "2"]).unwrap();
        assert!(matches!(cli.command, Command::Stark));
        assert_eq!(cli.seed, Some(7));
        assert_eq!(cli.workers, Some(2));
    }
}
