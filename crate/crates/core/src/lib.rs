//! Pseudo-spectral study of the 2D Boussinesq perturbation system with
//! horizontal-only dissipation on the periodic channel T x [-L, L]:
//! spectral transforms, the horizontal-average decomposition, anisotropic
//! norms and inequality checks, an integrating-factor RK3 stepper, and
//! energy-budget diagnostics.

pub mod config;
pub mod decomposition;
pub mod diagnostics;
pub mod dynamics;
pub mod experiment;
pub mod grid;
pub mod ic;
pub mod inequalities;
pub mod norms;
pub mod snapshot;
pub mod suite;

pub use config::{load_config, parse_config, ConfigError, ExperimentConfig, ReportFormat};
pub use decomposition::{
    bar_spectrum, decomposition_report, horizontal_average, oscillation, oscillation_spectrum,
    profile_from_spectrum, DecompositionReport, Profile,
};
pub use diagnostics::{
    bar_tilde_split, budget_closure, budget_rows, decay_fit, energy_functional, h1_budget,
    h2_budget, stratification_metrics, BudgetRow, DecayFit, DecayFitResult, DiagnosticsError,
    DiagnosticsRecord, H1Budget, H2Budget, SplitComponents, StratificationMetrics,
};
pub use dynamics::{
    averaged_system_residual, nonlinear_rhs, run, step, velocity_from_vorticity, AveragedResidual,
    BlowUp, DynamicsError, PhysParams, RunOptions, RunOutcome, State, Stepper, StepperConfig,
    SystemPart,
};
pub use experiment::{
    resolve_output_dir, run_experiment, ExperimentError, RunArtifacts, Summary, OUTPUT_DIR_ENV,
};
pub use grid::{Axis, Field, Grid, GridError, GridSpec, Spectrum};
pub use ic::{initial_state, IcError, IcPreset, InitialCondition};
pub use inequalities::{
    ensemble_ratios, inequality_ratio, project_first_harmonic, random_field, EnsembleReport,
    InequalityError, RatioReport, Variant,
};
pub use norms::{
    inner_product, l2_norm, l2_norm_spectrum, mixed_norm, sobolev_norm, sobolev_norm_spectrum,
    triple_product, velocity_sobolev_norm, Exponent, NormError, NormSpec,
};
pub use snapshot::{
    load_snapshots, read_field, write_field, FieldKind, Manifest, SnapshotError, SnapshotSet,
    SnapshotWriter,
};
pub use suite::{
    check_suite, default_seed_count, CheckReport, CheckResult, SuiteError, SuiteKind, UnknownSuite,
};
