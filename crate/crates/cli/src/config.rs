//! JSON run configuration.

use std::path::PathBuf;

use chaotun::units::ModelParams;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Sos,
    Lyap,
    Islands,
    Bifurcation,
    Bands,
    Splitting,
    Route1,
    Route2,
    Route3,
    Rotation,
    Stats,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Sos => "sos",
            Task::Lyap => "lyap",
            Task::Islands => "islands",
            Task::Bifurcation => "bifurcation",
            Task::Bands => "bands",
            Task::Splitting => "splitting",
            Task::Route1 => "route1",
            Task::Route2 => "route2",
            Task::Route3 => "route3",
            Task::Rotation => "rotation",
            Task::Stats => "stats",
        }
    }

    fn sweeps(self) -> bool {
        matches!(self, Task::Splitting | Task::Route2 | Task::Stats)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub gamma: f64,
    pub epsilon: f64,
    pub hbar_eff: f64,
    pub beta: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self { gamma: 0.24, epsilon: 0.4, hbar_eff: 0.2, beta: 0.0 }
    }
}

impl ModelSpec {
    pub fn params(&self) -> Result<ModelParams, CliError> {
        ModelParams::new(self.gamma, self.epsilon, self.hbar_eff, self.beta).map_err(CliError::from)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    HbarEff,
    /// `1 / hbar_eff`.
    HbarInv,
    Beta,
    Gamma,
    Epsilon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Spacing {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub start: f64,
    pub end: f64,
    pub count: usize,
    #[serde(default)]
    pub spacing: Spacing,
}

impl SweepSpec {
    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        if self.count == 0 {
            return Err(CliError::Validation(vec!["sweep.count must be >= 1".into()]));
        }
        if !(self.start.is_finite() && self.end.is_finite()) {
            return Err(CliError::Validation(vec!["sweep range must be finite".into()]));
        }
        if self.count > 1 && self.start == self.end {
            return Err(CliError::Validation(vec!["sweep range is empty (start == end)".into()]));
        }
        if self.spacing == Spacing::Log && !(self.start > 0.0 && self.end > 0.0) {
            return Err(CliError::Validation(vec!["log spacing needs positive range ends".into()]));
        }
        if self.count == 1 {
            return Ok(vec![self.start]);
        }
        let m = (self.count - 1) as f64;
        Ok((0..self.count)
            .map(|i| {
                let u = i as f64 / m;
                match self.spacing {
                    Spacing::Linear => self.start + (self.end - self.start) * u,
                    Spacing::Log => self.start * (self.end / self.start).powf(u),
                }
            })
            .collect())
    }

    /// Model point for one sweep value.
    pub fn apply(&self, base: &ModelParams, value: f64) -> ModelParams {
        match self.variable {
            SweepVariable::HbarEff => base.with_hbar(value),
            SweepVariable::HbarInv => base.with_hbar(1.0 / value),
            SweepVariable::Beta => base.with_beta(value),
            SweepVariable::Gamma => base.with_gamma(value),
            SweepVariable::Epsilon => base.with_epsilon(value),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    /// Task default when absent.
    pub n_points: Option<usize>,
    pub steps_per_period: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Must match the subcommand when present.
    pub task: Option<Task>,
    pub model: ModelSpec,
    pub sweep: Option<SweepSpec>,
    pub grid: GridSpec,
    /// Task-specific options, validated by the task.
    pub options: serde_json::Value,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            task: None,
            model: ModelSpec::default(),
            sweep: None,
            grid: GridSpec::default(),
            options: serde_json::Value::Object(Default::default()),
            seed: 1,
            output_dir: None,
        }
    }
}

/// Deserialize `value`, collecting every unknown key (prefixed by `prefix`)
/// instead of stopping at the first.
pub fn strict_from_value<T: DeserializeOwned>(value: serde_json::Value, prefix: &str) -> Result<T, CliError> {
    let mut unknown = Vec::new();
    let parsed: Result<T, _> = serde_ignored::deserialize(value, |path| {
        let p = path.to_string();
        unknown.push(if prefix.is_empty() { p } else { format!("{prefix}.{p}") });
    });
    match parsed {
        Err(e) => {
            Err(CliError::Validation(vec![if prefix.is_empty() { e.to_string() } else { format!("{prefix}: {e}") }]))
        }
        Ok(_) if !unknown.is_empty() => {
            Err(CliError::Validation(unknown.into_iter().map(|k| format!("unknown key `{k}`")).collect()))
        }
        Ok(v) => Ok(v),
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| CliError::Validation(vec![format!("invalid JSON: {e}")]))?;
        strict_from_value(value, "")
    }

    /// Checks shared by every task.
    pub fn validate(&self, task: Task) -> Result<(), CliError> {
        let mut problems = Vec::new();
        if let Some(t) = self.task {
            if t != task {
                problems.push(format!("config task `{}` does not match subcommand `{}`", t.as_str(), task.as_str()));
            }
        }
        if let Err(e) = self.model.params() {
            problems.push(e.to_string());
        }
        if let Some(s) = &self.sweep {
            if !task.sweeps() {
                problems.push(format!("task `{}` does not take a sweep", task.as_str()));
            }
            if let Err(CliError::Validation(p)) = s.values() {
                problems.extend(p);
            }
        }
        if !self.options.is_object() {
            problems.push("options must be a JSON object".into());
        }
        if self.grid.n_points.is_some_and(|n| n < 64 || !n.is_power_of_two()) {
            problems.push("grid.n_points must be a power of two >= 64".into());
        }
        if self.grid.steps_per_period.is_some_and(|s| s == 0) {
            problems.push("grid.steps_per_period must be >= 1".into());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(problems))
        }
    }

    pub fn task_options<T: DeserializeOwned>(&self) -> Result<T, CliError> {
        strict_from_value(self.options.clone(), "options")
    }
}
