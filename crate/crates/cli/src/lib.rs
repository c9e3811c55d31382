//! Experiment driver for the mpsmagic toolkit: configuration, orchestration,
//! CSV results, JSON manifests, SVG figures and machine-readable errors.

pub mod cache;
pub mod config;
pub mod plot;
pub mod rows;
pub mod run;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::config::{ConfigFile, ExperimentConfig, ExperimentKind, Overrides};
use crate::run::{run_experiment, Check, Failure};

pub const MANIFEST: &str = "manifest.json";

/// Errors with a dedicated exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0:#}")]
    Config(anyhow::Error),
    #[error("{failed} of {total} oracle checks failed")]
    ChecksFailed { failed: usize, total: usize },
    #[error("usage error: {0}")]
    Usage(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Environment {
    pub package_version: String,
    pub revision: String,
    pub os: String,
    pub arch: String,
    pub threads: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment_id: String,
    pub kind: ExperimentKind,
    pub csv: String,
    pub n_rows: usize,
    pub started_unix: u64,
    pub wall_time: f64,
    pub environment: Environment,
    pub config: serde_json::Value,
    pub overrides: serde_json::Value,
    pub failures: Vec<serde_json::Value>,
    pub checks: Vec<serde_json::Value>,
    pub plots: Vec<String>,
}

/// What a successful invocation prints on stdout.
#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub status: &'static str,
    pub experiment_id: String,
    pub kind: ExperimentKind,
    pub csv: PathBuf,
    pub manifest: PathBuf,
    pub n_rows: usize,
    pub failures: Vec<Failure>,
    pub checks: Vec<Check>,
    pub plots: Vec<PathBuf>,
}

/// The experiment kind a verb runs; `sre` accepts either SRE kind from the
/// file and defaults to the chi ladder.
pub fn kind_for_verb(verb: &str, from_file: Option<ExperimentKind>) -> Result<ExperimentKind> {
    let fixed = match verb {
        "scan" => ExperimentKind::PhaseScan,
        "mutual-info" => ExperimentKind::MutualInfo,
        "lrm" => ExperimentKind::LongRangeMagic,
        "autocorr" => ExperimentKind::Autocorr,
        "check" => ExperimentKind::OracleCheck,
        "sre" => match from_file {
            Some(k @ (ExperimentKind::FullStateSre | ExperimentKind::SreVsChi)) => k,
            Some(k) => return Err(CliError::Config(anyhow::anyhow!("verb 'sre' cannot run a '{}' config", k.name())).into()),
            None => ExperimentKind::SreVsChi,
        },
        other => return Err(CliError::Usage(format!("unknown verb '{other}'")).into()),
    };
    Ok(fixed)
}

/// Resolves the configuration, runs it and writes CSV, manifest and
/// (optionally) plots into the output directory.
pub fn execute(verb: &str, config: Option<&Path>, ov: Overrides, threads: usize, with_plots: bool) -> Result<Summary> {
    let file = match config {
        Some(p) => ConfigFile::load(p).map_err(CliError::Config)?,
        None => ConfigFile::default(),
    };
    let kind = kind_for_verb(verb, file.kind())?;
    let cfg = ExperimentConfig::resolve(file, kind, &ov).map_err(CliError::Config)?;
    let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let start = Instant::now();
    let out = run_experiment(&cfg, threads)?;
    let csv_name = format!("{}.csv", cfg.id);
    let csv_path = cfg.out_dir.join(&csv_name);
    rows::write_csv(&csv_path, &out.rows)?;
    let plots = if with_plots { plot::plot_results(&out.rows, kind, &cfg.out_dir.join("plots"))? } else { Vec::new() };
    let manifest = Manifest {
        experiment_id: cfg.id.clone(),
        kind,
        csv: csv_name,
        n_rows: out.rows.len(),
        started_unix,
        wall_time: start.elapsed().as_secs_f64(),
        environment: Environment {
            package_version: env!("CARGO_PKG_VERSION").into(),
            revision: rows::revision(),
            os: std::env::consts::OS.into(),
            arch: std::env::consts::ARCH.into(),
            threads,
        },
        config: serde_json::to_value(&cfg)?,
        overrides: serde_json::to_value(&ov)?,
        failures: out.failures.iter().map(serde_json::to_value).collect::<std::result::Result<_, _>>()?,
        checks: out.checks.iter().map(serde_json::to_value).collect::<std::result::Result<_, _>>()?,
        plots: plots.iter().map(|p| p.display().to_string()).collect(),
    };
    let manifest_path = cfg.out_dir.join(MANIFEST);
    std::fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?).with_context(|| format!("cannot write {}", manifest_path.display()))?;
    let failed = out.checks.iter().filter(|c| !c.pass).count();
    if failed > 0 {
        return Err(CliError::ChecksFailed { failed, total: out.checks.len() }.into());
    }
    Ok(Summary {
        status: "ok",
        experiment_id: cfg.id,
        kind,
        csv: csv_path,
        manifest: manifest_path,
        n_rows: out.rows.len(),
        failures: out.failures,
        checks: out.checks,
        plots,
    })
}

/// Re-plots a finished run from its manifest and CSV.
pub fn replot(out_dir: &Path, input: Option<&Path>) -> Result<Vec<PathBuf>> {
    let manifest_path = out_dir.join(MANIFEST);
    let text = std::fs::read_to_string(&manifest_path).with_context(|| format!("cannot read {}", manifest_path.display()))?;
    let manifest: Manifest = serde_json::from_str(&text).with_context(|| format!("malformed {}", manifest_path.display()))?;
    let csv = input.map(Path::to_path_buf).unwrap_or_else(|| out_dir.join(&manifest.csv));
    let rows = rows::read_csv(&csv)?;
    plot::plot_results(&rows, manifest.kind, &out_dir.join("plots"))
}

/// Machine-readable error report written to stderr.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorReport {
    pub status: &'static str,
    pub kind: &'static str,
    pub message: String,
    pub causes: Vec<String>,
    pub exit_code: i32,
}

impl ErrorReport {
    pub fn from_error(err: &anyhow::Error) -> Self {
        let (kind, exit_code) = match err.downcast_ref::<CliError>() {
            Some(CliError::Config(_)) => ("config", 2),
            Some(CliError::Usage(_)) => ("usage", 2),
            Some(CliError::ChecksFailed { .. }) => ("check-failed", 3),
            None if err.chain().any(|e| e.is::<mpsmagic::Error>()) => ("computation", 1),
            None if err.chain().any(|e| e.is::<std::io::Error>()) => ("io", 1),
            None => ("runtime", 1),
        };
        Self { status: "error", kind, message: err.to_string(), causes: err.chain().skip(1).map(|e| e.to_string()).collect(), exit_code }
    }
}
