//! Drive one configured run end to end and write its artifacts.
//!
//! A run produces, inside its output directory:
//!   - `records.csv` (or `.json`): the diagnostics time series
//!   - `summary.json`: scalar verdicts (energy ratio, fitted decay, flags)
//!   - `snapshots/`: optional (omega, theta) state pairs plus manifest
//!
//! Artifacts are byte-deterministic for a given config: no timestamps, no
//! machine identity, and the record cadence is fixed by the config alone.

use crate::config::{ConfigError, ExperimentConfig, ReportFormat};
use crate::diagnostics::{decay_fit, stratification_metrics, DecayFitResult, DiagnosticsError};
use crate::dynamics::{run, BlowUp, DynamicsError, RunOptions, RunOutcome};
use crate::grid::{Grid, GridError};
use crate::ic::{initial_state, IcError};
use crate::snapshot::{SnapshotError, SnapshotWriter};
use serde::Serialize;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Environment variable that overrides the configured output directory.
pub const OUTPUT_DIR_ENV: &str = "ABSQ_OUTPUT_DIR";

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Ic(#[from] IcError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv write failed: {0}")]
    Csv(#[from] csv::Error),
    #[error("json write failed: {0}")]
    Json(#[from] serde_json::Error),
}

impl ExperimentError {
    /// Process exit code for this failure class: config problems are 2,
    /// a non-finite state is the blow-up code 3, anything else 1.
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Config(_) => 2,
            ExperimentError::Dynamics(DynamicsError::NonFinite { .. }) => 3,
            _ => 1,
        }
    }
}

/// Resolve where artifacts go: explicit override (CLI flag), then the
/// `ABSQ_OUTPUT_DIR` environment variable, then the config's `output_dir`,
/// then `./absq_output`.
pub fn resolve_output_dir(cfg: &ExperimentConfig, flag: Option<&Path>) -> PathBuf {
    if let Some(dir) = flag {
        return dir.to_path_buf();
    }
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
        if !dir.is_empty() {
            return PathBuf::from(dir);
        }
    }
    if let Some(dir) = &cfg.output_dir {
        return dir.clone();
    }
    PathBuf::from("absq_output")
}

/// Scalar verdicts of one run, written as `summary.json`.
#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub schema: u32,
    pub ic_preset: String,
    pub grid: (usize, usize),
    pub half_width: f64,
    pub dt: f64,
    pub horizon: f64,
    pub nu: f64,
    pub kappa: f64,
    pub epsilon: f64,
    pub records: usize,
    /// E(0) = ||(u0, theta0)||_H2^2.
    pub e0: f64,
    /// sup_t of the energy functional (running H2 sup + dissipation).
    pub e_sup: f64,
    /// e_sup / e0; 0 for zero data.
    pub e_sup_over_e0: f64,
    /// Exponential fit of the oscillation-part H1 norm.
    pub decay: DecayFitResult,
    /// Oscillation share of ||theta||^2 at the final state.
    pub final_osc_fraction: Option<f64>,
    pub l2_balance_residual: f64,
    pub initial_h2: f64,
    pub flags: Vec<String>,
    pub blow_up: Option<BlowUp>,
}

/// Paths and outcome of a finished run.
pub struct RunArtifacts {
    pub summary: Summary,
    pub outcome: RunOutcome,
    pub series_path: PathBuf,
    pub summary_path: PathBuf,
    pub snapshot_dir: Option<PathBuf>,
    pub exit_code: i32,
}

/// The diagnostics columns exported to the time series, in order.
const SERIES_COLUMNS: [&str; 12] = [
    "t",
    "E",
    "l2_u",
    "l2_theta",
    "h1_osc",
    "h2_u",
    "h2_theta",
    "diss_u_cum",
    "diss_theta_cum",
    "bar_u2_max",
    "tail_mass",
    "cfl",
];

fn series_row(r: &crate::diagnostics::DiagnosticsRecord) -> [f64; 12] {
    [
        r.t,
        r.energy,
        r.l2_u,
        r.l2_theta,
        r.h1_osc,
        r.h2_u,
        r.h2_theta,
        r.diss_u_cum,
        r.diss_theta_cum,
        r.bar_u2_max,
        r.tail_mass,
        r.cfl,
    ]
}

fn write_series(
    path: &Path,
    format: ReportFormat,
    records: &[crate::diagnostics::DiagnosticsRecord],
) -> Result<(), ExperimentError> {
    match format {
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_path(path)?;
            w.write_record(SERIES_COLUMNS)?;
            for r in records {
                w.write_record(series_row(r).iter().map(|v| format!("{v:?}")))?;
            }
            w.flush().map_err(|source| ExperimentError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
        ReportFormat::Json => {
            let rows: Vec<serde_json::Value> = records
                .iter()
                .map(|r| {
                    let row = series_row(r);
                    serde_json::Value::Object(
                        SERIES_COLUMNS
                            .iter()
                            .zip(row)
                            .map(|(k, v)| ((*k).to_string(), serde_json::json!(v)))
                            .collect(),
                    )
                })
                .collect();
            let mut bytes = serde_json::to_vec_pretty(&rows)?;
            bytes.push(b'\n');
            std::fs::write(path, bytes).map_err(|source| ExperimentError::Io {
                path: path.to_path_buf(),
                source,
            })?;
        }
    }
    Ok(())
}

/// Run the configured experiment, writing all artifacts under `out_dir`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<RunArtifacts, ExperimentError> {
    cfg.validate()?;
    let grid = Grid::new(cfg.grid_spec())?;
    let params = cfg.phys_params();
    let stepping = cfg.stepper_config();
    let ic = initial_state(&grid, cfg.preset()?, cfg.epsilon)?;

    std::fs::create_dir_all(out_dir).map_err(|source| ExperimentError::Io {
        path: out_dir.to_path_buf(),
        source,
    })?;

    let snapshot_dir = (cfg.snapshot_every > 0).then(|| out_dir.join("snapshots"));
    let mut writer = match &snapshot_dir {
        Some(dir) => {
            let mut w = SnapshotWriter::create(dir, &grid, cfg.dt, cfg.nu, cfg.kappa)?;
            w.write_state(0, &ic.state)?;
            Some(w)
        }
        None => None,
    };

    let opts = RunOptions {
        horizon: cfg.horizon,
        localized_ic: ic.localized,
        snapshot_every: cfg.snapshot_every,
    };
    let mut sink_err: Option<SnapshotError> = None;
    let outcome = run(ic.state, &params, &stepping, &opts, |step, state| {
        if let Some(w) = writer.as_mut() {
            if let Err(e) = w.write_state(step, state) {
                let msg = e.to_string();
                sink_err = Some(e);
                return Err(msg);
            }
        }
        Ok(())
    });
    if let Some(e) = sink_err {
        return Err(e.into());
    }
    let outcome = outcome?;
    if let Some(w) = &writer {
        w.finalize()?;
    }

    let series: Vec<(f64, f64)> = outcome.records.iter().map(|r| (r.t, r.h1_osc)).collect();
    let decay = decay_fit(&series, None);
    let final_osc_fraction = stratification_metrics(&outcome.final_state.theta_hat)?.osc_fraction;

    let e0 = outcome.records.first().map_or(0.0, |r| r.energy);
    let e_sup = outcome
        .records
        .iter()
        .fold(0.0f64, |m, r| m.max(r.energy));
    let summary = Summary {
        schema: 1,
        ic_preset: cfg.ic_preset.clone(),
        grid: (cfg.n1, cfg.n2),
        half_width: cfg.half_width,
        dt: cfg.dt,
        horizon: cfg.horizon,
        nu: cfg.nu,
        kappa: cfg.kappa,
        epsilon: cfg.epsilon,
        records: outcome.records.len(),
        e0,
        e_sup,
        e_sup_over_e0: if e0 > 0.0 { e_sup / e0 } else { 0.0 },
        decay,
        final_osc_fraction,
        l2_balance_residual: outcome.l2_balance_residual,
        initial_h2: outcome.initial_h2,
        flags: outcome.flags.clone(),
        blow_up: outcome.blow_up,
    };

    let series_path = out_dir.join(match cfg.report_format {
        ReportFormat::Csv => "records.csv",
        ReportFormat::Json => "records.json",
    });
    write_series(&series_path, cfg.report_format, &outcome.records)?;

    let summary_path = out_dir.join("summary.json");
    let mut bytes = serde_json::to_vec_pretty(&summary)?;
    bytes.push(b'\n');
    std::fs::write(&summary_path, bytes).map_err(|source| ExperimentError::Io {
        path: summary_path.to_path_buf(),
        source,
    })?;

    let exit_code = if summary.blow_up.is_some() {
        3
    } else if summary.flags.is_empty() {
        0
    } else {
        1
    };

    Ok(RunArtifacts {
        summary,
        outcome,
        series_path,
        summary_path,
        snapshot_dir,
        exit_code,
    })
}
