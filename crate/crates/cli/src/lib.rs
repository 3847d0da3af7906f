//! File-driven experiment runner.
//!
//! `run` executes a config and leaves an artifact directory with a
//! `manifest.json`; `validate` checks guards without running; `info`
//! summarises an artifact directory.

pub mod config;
pub mod experiments;

use std::fmt;
use std::path::{Path, PathBuf};

use fml_core::io::{self, Manifest};
use serde::{Deserialize, Serialize};

pub use config::{ConfigError, RunConfig};
pub use experiments::{experiment, experiments, Check, Experiment, Failure, RunContext};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

/// Written next to the manifest when a run fails after it started.
pub const FAILURE_FILE: &str = "failure.json";

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::config(e.0)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub experiment: String,
    pub config_hash: String,
    pub message: String,
    /// Artifacts written before the failure.
    pub artifacts: Vec<String>,
}

fn config_base(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn manifest(cfg: &RunConfig, artifacts: Vec<String>, status: &str) -> Manifest {
    Manifest {
        tool: "fml".into(),
        version: io::version_string(),
        experiment: cfg.experiment.clone(),
        config_hash: cfg.hash(),
        config: cfg.to_json_value(),
        artifacts,
        status: status.into(),
    }
}

/// Result of a successful or numerically failed run.
#[derive(Debug)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub manifest: Manifest,
    pub failure: Option<FailureRecord>,
}

impl RunReport {
    pub fn exit_code(&self) -> i32 {
        if self.failure.is_some() {
            EXIT_NUMERICAL
        } else {
            EXIT_OK
        }
    }
}

/// Runs the experiment in `path` with `jobs` worker threads.
///
/// Config problems and an existing manifest (without `force`) are errors
/// with exit code 2. A numerical failure still returns a report: the
/// partial artifacts, a failure record and a manifest with status `failed`.
pub fn run(path: &Path, force: bool, jobs: usize) -> Result<RunReport, CliError> {
    let cfg = RunConfig::from_path(path)?;
    let exp = experiment(&cfg.experiment)?;
    let base = config_base(path);
    let check = exp.check(&cfg, &base);
    if !check.violations.is_empty() {
        return Err(CliError::config(format!("config violates guards:\n  - {}", check.violations.join("\n  - "))));
    }
    let out_dir = cfg.output_dir(&base);
    let manifest_path = out_dir.join(Manifest::FILE);
    if manifest_path.exists() {
        if !force {
            return Err(CliError::config(format!(
                "output exists: {} already holds a manifest; pass --force to overwrite",
                out_dir.display()
            )));
        }
        let stale = [manifest_path.clone(), out_dir.join(FAILURE_FILE)];
        for p in stale.iter().filter(|p| p.exists()) {
            std::fs::remove_file(p).map_err(|e| CliError::config(format!("cannot remove {}: {e}", p.display())))?;
        }
    }
    std::fs::create_dir_all(&out_dir)
        .map_err(|e| CliError::config(format!("cannot create {}: {e}", out_dir.display())))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| CliError::config(format!("cannot start {jobs} workers: {e}")))?;
    log::info!("running {} into {} with {} worker(s)", exp.name(), out_dir.display(), jobs.max(1));
    let ctx = RunContext { config: &cfg, base: &base, out_dir: &out_dir, jobs: jobs.max(1) };
    let outcome = pool.install(|| exp.run(&ctx));
    let io_failure = |e: fml_core::Error| CliError { code: EXIT_NUMERICAL, message: e.to_string() };
    match outcome {
        Ok(artifacts) => {
            let manifest = manifest(&cfg, artifacts, "ok");
            io::write_json(&manifest_path, &manifest).map_err(io_failure)?;
            Ok(RunReport { out_dir, manifest, failure: None })
        }
        Err(Failure { message, artifacts }) => {
            let record = FailureRecord {
                experiment: cfg.experiment.clone(),
                config_hash: cfg.hash(),
                message,
                artifacts: artifacts.clone(),
            };
            io::write_json(&out_dir.join(FAILURE_FILE), &record).map_err(io_failure)?;
            let mut listed = artifacts;
            listed.push(FAILURE_FILE.into());
            let manifest = manifest(&cfg, listed, "failed");
            io::write_json(&manifest_path, &manifest).map_err(io_failure)?;
            Ok(RunReport { out_dir, manifest, failure: Some(record) })
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub experiment: String,
    pub config_hash: String,
    pub output: PathBuf,
    #[serde(flatten)]
    pub check: Check,
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "experiment: {}", self.experiment)?;
        writeln!(f, "config hash: {}", self.config_hash)?;
        writeln!(f, "output: {}", self.output.display())?;
        writeln!(f, "cells: {}", self.check.cells)?;
        writeln!(f, "estimated memory: {:.1} MiB", self.check.memory_bytes as f64 / (1u64 << 20) as f64)?;
        if self.check.violations.is_empty() {
            writeln!(f, "violations: none")
        } else {
            writeln!(f, "violations:")?;
            self.check.violations.iter().try_for_each(|v| writeln!(f, "  - {v}"))
        }
    }
}

/// Parses the config and runs the guards; only schema errors are errors.
pub fn validate(path: &Path) -> Result<ValidationReport, CliError> {
    let cfg = RunConfig::from_path(path)?;
    let exp = experiment(&cfg.experiment)?;
    let base = config_base(path);
    Ok(ValidationReport {
        experiment: cfg.experiment.clone(),
        config_hash: cfg.hash(),
        output: cfg.output_dir(&base),
        check: exp.check(&cfg, &base),
    })
}

#[derive(Debug)]
pub struct ArtifactInfo {
    pub manifest: Manifest,
    pub missing: Vec<String>,
    pub failure: Option<FailureRecord>,
}

impl fmt::Display for ArtifactInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = &self.manifest;
        writeln!(f, "experiment: {}", m.experiment)?;
        writeln!(f, "status: {}", m.status)?;
        writeln!(f, "version: {}", m.version)?;
        writeln!(f, "config hash: {}", m.config_hash)?;
        writeln!(f, "artifacts: {}", m.artifacts.len())?;
        for a in &m.artifacts {
            let mark = if self.missing.contains(a) { " (missing)" } else { "" };
            writeln!(f, "  {a}{mark}")?;
        }
        if let Some(fail) = &self.failure {
            writeln!(f, "failure: {}", fail.message)?;
        }
        Ok(())
    }
}

pub fn info(dir: &Path) -> Result<ArtifactInfo, CliError> {
    let path = dir.join(Manifest::FILE);
    let manifest: Manifest =
        io::read_json(&path).map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
    let missing = manifest.artifacts.iter().filter(|a| !dir.join(a).exists()).cloned().collect();
    let failure = io::read_json(&dir.join(FAILURE_FILE)).ok();
    Ok(ArtifactInfo { manifest, missing, failure })
}
