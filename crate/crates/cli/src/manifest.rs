//! `manifest.json`: what ran, with which inputs, and a sha256 of every output.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::CliResult;

pub const MANIFEST: &str = "manifest.json";

pub struct RunInfo<'a> {
    pub subcommand: &'a str,
    pub config_path: &'a Path,
    pub config: &'a RunConfig,
    pub seed: u64,
    pub workers: usize,
    pub wall_time_s: f64,
}

#[derive(Serialize)]
struct OutputEntry {
    path: String,
    bytes: u64,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    cli_version: &'static str,
    core_version: &'static str,
    subcommand: &'a str,
    config_path: String,
    config_sha256: String,
    config: &'a RunConfig,
    seed: u64,
    workers: usize,
    wall_time_s: f64,
    outputs: Vec<OutputEntry>,
}

pub fn sha256_file(path: &Path) -> CliResult<(u64, String)> {
    let data = std::fs::read(path)?;
    Ok((data.len() as u64, hex::encode(Sha256::digest(&data))))
}

pub fn write(out: &Path, run: &RunInfo, files: &[String]) -> CliResult<PathBuf> {
    let outputs = files
        .iter()
        .map(|f| {
            let (bytes, sha256) = sha256_file(&out.join(f))?;
            Ok(OutputEntry { path: f.clone(), bytes, sha256 })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let manifest = Manifest {
        tool: "raman",
        cli_version: env!("CARGO_PKG_VERSION"),
        core_version: raman_core::VERSION,
        subcommand: run.subcommand,
        config_path: run.config_path.display().to_string(),
        config_sha256: sha256_file(run.config_path)?.1,
        config: run.config,
        seed: run.seed,
        workers: run.workers,
        wall_time_s: run.wall_time_s,
        outputs,
    };
    let path = out.join(MANIFEST);
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}
