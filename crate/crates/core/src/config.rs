//! Flat TOML experiment configuration.
//!
//! One file describes one run: grid, time stepping, physical coefficients,
//! initial data, and output policy. Unknown keys are rejected so a typo
//! cannot silently fall back to a default, and every validation error names
//! the offending key.

use crate::dynamics::{PhysParams, StepperConfig};
use crate::grid::GridSpec;
use crate::ic::IcPreset;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config key `{key}`: {reason}")]
    BadValue { key: &'static str, reason: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

fn default_output_every() -> usize {
    1
}

fn default_true() -> bool {
    true
}

fn default_dealias_fraction() -> f64 {
    2.0 / 3.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n1: usize,
    pub n2: usize,
    pub half_width: f64,
    pub dt: f64,
    /// Integration horizon.
    #[serde(rename = "T")]
    pub horizon: f64,
    pub nu: f64,
    pub kappa: f64,
    pub epsilon: f64,
    /// One of `zero`, `gaussian_pair`, `single_mode`, `random(<seed>)`.
    pub ic_preset: String,
    #[serde(default = "default_output_every")]
    pub output_every: usize,
    /// Steps between state snapshots; 0 disables snapshots.
    #[serde(default)]
    pub snapshot_every: usize,
    #[serde(default = "default_true")]
    pub buoyancy_coupling: bool,
    #[serde(default = "default_dealias_fraction")]
    pub dealias_fraction: f64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub report_format: ReportFormat,
}

impl ExperimentConfig {
    pub fn grid_spec(&self) -> GridSpec {
        GridSpec::new(self.n1, self.n2, self.half_width)
            .with_dealias_fraction(self.dealias_fraction)
    }

    pub fn phys_params(&self) -> PhysParams {
        PhysParams {
            nu: self.nu,
            kappa: self.kappa,
            buoyancy_coupling: self.buoyancy_coupling,
        }
    }

    pub fn stepper_config(&self) -> StepperConfig {
        StepperConfig {
            dt: self.dt,
            output_every: self.output_every,
        }
    }

    pub fn preset(&self) -> Result<IcPreset, ConfigError> {
        IcPreset::parse(&self.ic_preset).ok_or(ConfigError::BadValue {
            key: "ic_preset",
            reason: format!(
                "unknown preset {:?}; expected zero, gaussian_pair, single_mode, or random(<seed>)",
                self.ic_preset
            ),
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &'static str, reason: String| ConfigError::BadValue { key, reason };
        self.grid_spec().validate().map_err(|e| match e {
            crate::grid::GridError::BadDealiasFraction(v) => {
                bad("dealias_fraction", format!("must lie in (0, 1], got {v}"))
            }
            other => bad("n1", other.to_string()),
        })?;
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(bad("dt", format!("must be finite and > 0, got {}", self.dt)));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(bad(
                "T",
                format!("must be finite and > 0, got {}", self.horizon),
            ));
        }
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(bad("nu", format!("must be finite and >= 0, got {}", self.nu)));
        }
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(bad(
                "kappa",
                format!("must be finite and >= 0, got {}", self.kappa),
            ));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(bad(
                "epsilon",
                format!("must be finite and >= 0, got {}", self.epsilon),
            ));
        }
        if self.output_every == 0 {
            return Err(bad("output_every", "must be >= 1".into()));
        }
        self.preset()?;
        Ok(())
    }
}

/// Parse without touching the filesystem; validation included.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let cfg: ExperimentConfig = toml::from_str(text)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}
