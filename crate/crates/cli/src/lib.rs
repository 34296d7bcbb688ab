//! Batch runner: JSON configuration in, CSV tables and a digest manifest out.

pub mod config;
pub mod output;
pub mod tasks;

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

pub use config::{RunConfig, Task};
pub use output::{verify_manifest, RunManifest, MANIFEST_NAME};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Core(#[from] chaotun::Error),
    #[error("{failed} of {total} sweep points failed")]
    Partial { failed: usize, total: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use chaotun::Error as E;
        match self {
            CliError::Validation(_) => 2,
            CliError::Core(E::ParameterDomain(_) | E::Configuration(_) | E::Json(_)) => 2,
            CliError::Partial { .. } => 4,
            _ => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self.exit_code() {
            2 => "validation",
            4 => "partial",
            _ => "numerical",
        }
    }

    /// Machine-readable error report.
    pub fn to_json(&self) -> serde_json::Value {
        let messages = match self {
            CliError::Validation(m) => m.clone(),
            other => vec![other.to_string()],
        };
        serde_json::json!({ "error": self.kind(), "exit_code": self.exit_code(), "messages": messages })
    }
}

fn now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Runs `task` on a pool of `workers` threads, writing every output and the
/// manifest into `out`. Sweep points that fail are listed in the manifest
/// and reported as [`CliError::Partial`] after all outputs are written.
pub fn run(task: Task, config: &RunConfig, out: &Path, workers: usize) -> Result<RunManifest, CliError> {
    if workers == 0 {
        return Err(CliError::Validation(vec!["--workers must be >= 1".into()]));
    }
    config.validate(task)?;
    let started = now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Io(std::io::Error::other(e)))?;
    let mut dir = output::OutputDir::create(out)?;
    let outcome = pool.install(|| tasks::run_task(task, config, &mut dir))?;
    let outcome_total = outcome.total;
    let mut manifest = RunManifest {
        task: task.as_str().into(),
        code_version: env!("CARGO_PKG_VERSION").into(),
        config: serde_json::to_value(config).map_err(|e| CliError::Io(e.into()))?,
        workers,
        started,
        finished: 0.0,
        outputs: Vec::new(),
        summary: outcome.summary,
        failures: outcome.failures,
    };
    if !manifest.failures.is_empty() {
        dir.json("failures.json", &manifest.failures)?;
    }
    manifest.outputs = dir.files().to_vec();
    manifest.finished = now();
    let mut bytes = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Io(e.into()))?;
    bytes.push(b'\n');
    std::fs::write(out.join(MANIFEST_NAME), bytes)?;
    if !manifest.failures.is_empty() {
        return Err(CliError::Partial { failed: manifest.failures.len(), total: outcome_total });
    }
    Ok(manifest)
}
