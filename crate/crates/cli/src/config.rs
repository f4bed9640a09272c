//! Structured JSON config with schema validation and flag overrides.
//! Validation errors carry the offending field path so they surface as
//! exit-code-2 usage errors.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use itoadj::space::{Mark, MarkSet};
use itoadj::verify::{SuiteConfig, ALL_CHECKS};
use itoadj::Model;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub model: Model,
    pub n_steps: usize,
    pub marks: Vec<MarkEntry>,
    pub seed: u64,
    pub mc_paths: usize,
    pub p_values: Vec<f64>,
    pub tolerances: Tolerances,
    pub checks: Vec<String>,
    pub report_only: Vec<String>,
    pub output: Output,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarkEntry {
    pub label: String,
    pub pi: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub exact: f64,
    pub mc_sigmas: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { exact: 1e-10, mc_sigmas: 4.0 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Output {
    pub json_path: Option<PathBuf>,
    pub csv_path: Option<PathBuf>,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            model: Model::Wiener,
            n_steps: 4,
            marks: Vec::new(),
            seed: 1,
            mc_paths: 100_000,
            p_values: vec![2.0, 4.0],
            tolerances: Tolerances::default(),
            checks: Vec::new(),
            report_only: Vec::new(),
            output: Output::default(),
        }
    }
}

/// Flags shared by every subcommand; each one overrides the matching
/// config-file field.
#[derive(Debug, Clone, Args, Default)]
pub struct Overrides {
    /// Config file (JSON); defaults apply when omitted
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// wiener | poisson | joint
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub n_steps: Option<usize>,
    /// Jump mark as label=intensity; repeatable, replaces config marks
    #[arg(long = "mark")]
    pub marks: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub mc_paths: Option<usize>,
    /// Check id to run; repeatable, replaces the config list
    #[arg(long = "check")]
    pub checks: Vec<String>,
    #[arg(long)]
    pub tol_exact: Option<f64>,
    #[arg(long)]
    pub mc_sigmas: Option<f64>,
}

#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "config error at `{}`: {}", self.field, self.message)
    }
}

fn err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { field: field.into(), message: message.into() }
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = fs::read_to_string(path)
            .map_err(|e| err("config", format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| err("config", e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), ConfigError> {
        if let Some(m) = &o.model {
            self.model = match m.as_str() {
                "wiener" => Model::Wiener,
                "poisson" => Model::Poisson,
                "joint" => Model::Joint,
                other => return Err(err("model", format!("unknown model {other:?}"))),
            };
        }
        if let Some(n) = o.n_steps {
            self.n_steps = n;
        }
        if !o.marks.is_empty() {
            self.marks = o
                .marks
                .iter()
                .map(|s| {
                    let (label, pi) = s
                        .split_once('=')
                        .ok_or_else(|| err("marks", format!("expected label=intensity, got {s:?}")))?;
                    let pi: f64 = pi
                        .parse()
                        .map_err(|_| err("marks", format!("intensity {pi:?} is not a number")))?;
                    Ok(MarkEntry { label: label.to_string(), pi })
                })
                .collect::<Result<_, ConfigError>>()?;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(m) = o.mc_paths {
            self.mc_paths = m;
        }
        if !o.checks.is_empty() {
            self.checks = o.checks.clone();
        }
        if let Some(t) = o.tol_exact {
            self.tolerances.exact = t;
        }
        if let Some(s) = o.mc_sigmas {
            self.tolerances.mc_sigmas = s;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_steps < 1 {
            return Err(err("n_steps", "must be at least 1"));
        }
        let dt = 1.0 / self.n_steps as f64;
        for (i, m) in self.marks.iter().enumerate() {
            let field = format!("marks[{i}].pi");
            if !(m.pi > 0.0) {
                return Err(err(&field, format!("mark '{}' needs a positive intensity", m.label)));
            }
            if m.pi * dt >= 1.0 {
                return Err(err(
                    &field,
                    format!(
                        "mark '{}': pi*dt = {} >= 1; increase n_steps",
                        m.label,
                        m.pi * dt
                    ),
                ));
            }
        }
        if self.model.has_marks() && self.marks.is_empty() {
            return Err(err("marks", format!("model {} needs at least one mark", self.model.name())));
        }
        if !self.model.has_marks() && !self.marks.is_empty() {
            return Err(err("marks", "wiener model takes no marks"));
        }
        for (i, p) in self.p_values.iter().enumerate() {
            if !(*p >= 1.0) {
                return Err(err(&format!("p_values[{i}]"), "exponent must be >= 1"));
            }
        }
        if !(self.tolerances.exact > 0.0) {
            return Err(err("tolerances.exact", "must be positive"));
        }
        if self.tolerances.mc_sigmas < 0.0 {
            return Err(err("tolerances.mc_sigmas", "must be nonnegative"));
        }
        for (i, c) in self.checks.iter().enumerate() {
            if !ALL_CHECKS.contains(&c.as_str()) {
                return Err(err(
                    &format!("checks[{i}]"),
                    format!("unknown check {c:?}; known: {}", ALL_CHECKS.join(", ")),
                ));
            }
        }
        Ok(())
    }

    pub fn mark_set(&self) -> MarkSet {
        MarkSet::new(
            self.marks
                .iter()
                .map(|m| Mark { label: m.label.clone(), intensity: m.pi })
                .collect(),
        )
    }

    pub fn suite(&self) -> SuiteConfig {
        SuiteConfig {
            model: self.model,
            n_steps: self.n_steps,
            marks: self.mark_set(),
            seed: self.seed,
            mc_paths: self.mc_paths,
            p_values: self.p_values.clone(),
            tol_exact: self.tolerances.exact,
            mc_sigmas: self.tolerances.mc_sigmas,
            checks: self.checks.clone(),
            report_only: self.report_only.clone(),
        }
    }

    pub fn resolve(o: &Overrides) -> Result<Config, ConfigError> {
        let mut config = match &o.config {
            Some(path) => Config::load(path)?,
            None => Config::default(),
        };
        config.apply(o)?;
        config.validate()?;
        Ok(config)
    }
}
