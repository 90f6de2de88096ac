//! Experiment harness: configuration, statistics, output and the drivers
//! behind the `fieldslab` command line.

pub mod config;
pub mod emit;
pub mod experiments;
pub mod stats;

use std::path::{Path, PathBuf};

use anyhow::Result;

use config::ExperimentConfig;
use emit::{Format, Meta};
use experiments::{experiment_registry, Report};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Runs one subcommand and writes its tables and `meta.json` into `out`.
pub fn run_and_emit(subcommand: &str, cfg: &ExperimentConfig, out: &Path, format: Format) -> Result<(Report, Vec<PathBuf>)> {
    let exp = experiment_registry().get(subcommand)?;
    let report = exp.run(cfg)?;
    let meta = Meta {
        version: VERSION.to_string(),
        subcommand: subcommand.to_string(),
        seed: cfg.seed,
        config_hash: cfg.hash(),
        format,
        tables: report.tables.iter().map(|t| format!("{}.{}", t.name, format.extension())).collect(),
        passed: report.passed,
        config: serde_json::to_value(cfg)?,
    };
    let files = emit::emit(out, &report.tables, format, &meta)?;
    Ok((report, files))
}
