//! Seeded verification batteries behind the `check` command.
//!
//! Each battery probes one module's invariants on ensembles of random data
//! and reports every check as pass/fail with the measured value and its
//! threshold, so a failure names exactly what broke and where. Identical
//! seed counts give identical reports.

use crate::diagnostics::{h1_budget, h2_budget, DiagnosticsError};
use crate::dynamics::PhysParams;
use crate::grid::{Axis, Field, Grid, GridError, GridSpec};
use crate::ic::{initial_state, IcError, IcPreset};
use crate::inequalities::{ensemble_ratios, random_field, EnsembleReport, InequalityError, Variant};
use crate::norms::{l2_norm, l2_norm_spectrum, NormError};
use serde::Serialize;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SuiteError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Norm(#[from] NormError),
    #[error(transparent)]
    Inequality(#[from] InequalityError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error(transparent)]
    Ic(#[from] IcError),
}

/// Unknown suite names are a usage error, distinct from check failures.
#[derive(Debug, Error)]
#[error("unknown suite {0:?}; expected grid, decomposition, inequalities, budget, or all")]
pub struct UnknownSuite(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    Grid,
    Decomposition,
    Inequalities,
    Budget,
    All,
}

impl FromStr for SuiteKind {
    type Err = UnknownSuite;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "grid" => SuiteKind::Grid,
            "decomposition" => SuiteKind::Decomposition,
            "inequalities" => SuiteKind::Inequalities,
            "budget" => SuiteKind::Budget,
            "all" => SuiteKind::All,
            other => return Err(UnknownSuite(other.to_string())),
        })
    }
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SuiteKind::Grid => "grid",
            SuiteKind::Decomposition => "decomposition",
            SuiteKind::Inequalities => "inequalities",
            SuiteKind::Budget => "budget",
            SuiteKind::All => "all",
        };
        write!(f, "{name}")
    }
}

/// One verdict: `measured` compared against `threshold` as described by
/// `criterion`.
#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub module: String,
    pub passed: bool,
    pub measured: f64,
    pub threshold: f64,
    pub criterion: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckReport {
    pub schema: u32,
    pub suite: SuiteKind,
    pub seed_count: usize,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
    /// Per-variant ratio statistics, present when the inequalities battery ran.
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ensembles: Vec<EnsembleReport>,
}

fn upper(name: &str, module: &str, measured: f64, threshold: f64) -> CheckResult {
    CheckResult {
        name: name.into(),
        module: module.into(),
        passed: measured <= threshold,
        measured,
        threshold,
        criterion: "measured <= threshold".into(),
    }
}

fn within(name: &str, module: &str, measured: f64, target: f64, tol: f64) -> CheckResult {
    CheckResult {
        name: name.into(),
        module: module.into(),
        passed: (measured - target).abs() <= tol,
        measured,
        threshold: tol,
        criterion: format!("|measured - {target:.17}| <= threshold"),
    }
}

fn battery_grid() -> Result<Arc<Grid>, GridError> {
    Grid::new(GridSpec::new(64, 128, 10.0))
}

fn max_abs_diff(a: &Field, b: &Field) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0f64, |m, v| m.max(v))
}

fn grid_battery(seed_count: usize) -> Result<Vec<CheckResult>, SuiteError> {
    let g = battery_grid()?;
    let sigma = g.half_width() / 8.0;
    let module = "grid";

    let mut round_trip = 0.0f64;
    let mut parseval = 0.0f64;
    let mut dealias_fix = 0.0f64;
    for seed in 0..seed_count as u64 {
        let f = random_field(&g, seed, 6, sigma)?;
        let s = g.forward(&f)?;
        let back = g.inverse(&s)?;
        let peak = f.max_abs().max(1e-300);
        round_trip = round_trip.max(max_abs_diff(&f, &back) / peak);

        let phys = l2_norm(&f).powi(2);
        let spec = l2_norm_spectrum(&s).powi(2);
        parseval = parseval.max((phys - spec).abs() / phys.max(1e-300));

        let once = g.dealias(&s);
        let twice = g.dealias(&once);
        let gap = once
            .coeffs()
            .iter()
            .zip(twice.coeffs())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0f64, |m, v| m.max(v));
        dealias_fix = dealias_fix.max(gap);
    }

    // trig test function with exactly representable modes in both axes
    let l = g.half_width();
    let pi = std::f64::consts::PI;
    let f = g.field_from_fn(|x1, x2| {
        (2.0 * pi * x1).sin() * (pi * x2 / l).cos() + 0.5 * (4.0 * pi * x1).cos() * (2.0 * pi * x2 / l).sin()
    });
    let d1_exact = g.field_from_fn(|x1, x2| {
        2.0 * pi * (2.0 * pi * x1).cos() * (pi * x2 / l).cos()
            - 2.0 * pi * (4.0 * pi * x1).sin() * (2.0 * pi * x2 / l).sin()
    });
    let d2_exact = g.field_from_fn(|x1, x2| {
        -(pi / l) * (2.0 * pi * x1).sin() * (pi * x2 / l).sin()
            + (pi / l) * (4.0 * pi * x1).cos() * (2.0 * pi * x2 / l).cos()
    });
    let d11_exact = g.field_from_fn(|x1, x2| {
        -(2.0 * pi) * (2.0 * pi) * (2.0 * pi * x1).sin() * (pi * x2 / l).cos()
            - 0.5 * (4.0 * pi) * (4.0 * pi) * (4.0 * pi * x1).cos() * (2.0 * pi * x2 / l).sin()
    });
    let s = g.forward(&f)?;
    let d1 = g.inverse(&g.derivative(&s, Axis::X1, 1))?;
    let d2 = g.inverse(&g.derivative(&s, Axis::X2, 1))?;
    let d11 = g.inverse(&g.derivative(&s, Axis::X1, 2))?;
    let deriv_err = max_abs_diff(&d1, &d1_exact)
        .max(max_abs_diff(&d2, &d2_exact))
        .max(max_abs_diff(&d11, &d11_exact) / d11_exact.max_abs());

    Ok(vec![
        upper("transform_round_trip", module, round_trip, 1e-12),
        upper("analytic_derivatives", module, deriv_err, 1e-10),
        upper("parseval_identity", module, parseval, 1e-12),
        upper("dealias_idempotent", module, dealias_fix, 0.0),
    ])
}

fn decomposition_battery(seed_count: usize) -> Result<Vec<CheckResult>, SuiteError> {
    let g = battery_grid()?;
    let sigma = g.half_width() / 8.0;
    let module = "decomposition";

    let mut pythagoras = 0.0f64;
    let mut avg_of_osc = 0.0f64;
    let mut idempotent = 0.0f64;
    let mut profile_gap = 0.0f64;
    for seed in 0..seed_count as u64 {
        let f = random_field(&g, seed, 6, sigma)?;
        let peak = f.max_abs().max(1e-300);

        let bar = crate::decomposition::horizontal_average(&f);
        let osc = crate::decomposition::oscillation(&f);
        let total = l2_norm(&f).powi(2);
        let split = bar.l2_norm().powi(2) + l2_norm(&osc).powi(2);
        pythagoras = pythagoras.max((total - split).abs() / total.max(1e-300));

        avg_of_osc = avg_of_osc
            .max(crate::decomposition::horizontal_average(&osc).max_abs() / peak);

        idempotent =
            idempotent.max(max_abs_diff(&crate::decomposition::oscillation(&osc), &osc) / peak);

        let s = g.forward(&f)?;
        let from_spectrum =
            crate::decomposition::profile_from_spectrum(&crate::decomposition::bar_spectrum(&s))?;
        let gap = bar
            .values()
            .iter()
            .zip(from_spectrum.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, |m, v| m.max(v));
        profile_gap = profile_gap.max(gap / peak);
    }

    Ok(vec![
        upper("pythagoras_residual", module, pythagoras, 1e-11),
        upper("average_annihilates_oscillation", module, avg_of_osc, 1e-13),
        upper("oscillation_idempotent", module, idempotent, 1e-15),
        upper("profile_matches_spectral_slice", module, profile_gap, 1e-13),
    ])
}

const SQRT2: f64 = std::f64::consts::SQRT_2;
const INV_TWO_PI: f64 = 1.0 / (2.0 * std::f64::consts::PI);

fn inequalities_battery(
    seed_count: usize,
) -> Result<(Vec<CheckResult>, Vec<EnsembleReport>), SuiteError> {
    let g = battery_grid()?;
    let module = "inequalities";
    let mut checks = Vec::new();
    let mut ensembles = Vec::new();

    for variant in Variant::ALL {
        let rep = ensemble_ratios(&g, variant, seed_count, 0)?;

        // hard bounds where a constant is known; everything else reports its
        // empirical maximum without asserting a value
        match variant {
            Variant::Gg1 => {
                checks.push(upper("gg1_sup_bound", module, rep.max_ratio, SQRT2 + 1e-6))
            }
            Variant::Gg2 => checks.push(upper(
                "gg2_periodic_sup_bound",
                module,
                rep.max_ratio,
                SQRT2 + 1e-6,
            )),
            Variant::W2 => checks.push(upper(
                "w2_zero_mean_sup_bound",
                module,
                rep.max_ratio,
                SQRT2 + 1e-6,
            )),
            Variant::PoincareL2 => checks.push(within(
                "poincare_l2_sharp_constant",
                module,
                rep.max_ratio,
                INV_TWO_PI,
                1e-9,
            )),
            _ => {}
        }

        // every variant: a disjoint ensemble of the same size must land its
        // maximum within 20%, else the first run told us nothing reliable
        let other = ensemble_ratios(&g, variant, seed_count, seed_count as u64)?;
        let top = rep.max_ratio.max(other.max_ratio).max(1e-300);
        let gap = (rep.max_ratio - other.max_ratio).abs() / top;
        checks.push(upper(
            &format!("{}_ratio_stable", variant.tag()),
            module,
            gap,
            0.2,
        ));

        ensembles.push(rep);
    }

    Ok((checks, ensembles))
}

fn budget_battery(seed_count: usize) -> Result<Vec<CheckResult>, SuiteError> {
    let g = battery_grid()?;
    let module = "diagnostics";
    let params = PhysParams::new(0.4, 0.7);

    let mut vanish_h1 = 0.0f64;
    let mut vanish_h2 = 0.0f64;
    let mut close_h1 = 0.0f64;
    let mut close_h2 = 0.0f64;
    for seed in 0..seed_count as u64 {
        let ic = initial_state(&g, IcPreset::Random { seed }, 0.1)?;
        let h1 = h1_budget(&ic.state, &params)?;
        let h2 = h2_budget(&ic.state, &params)?;

        vanish_h1 = vanish_h1.max(h1.m31.abs());
        vanish_h2 = vanish_h2
            .max(h2.n31.abs())
            .max(h2.p11.abs())
            .max(h2.p21.abs())
            .max(h2.p51.abs())
            .max(h2.p61.abs());

        let m_sum = h1.m1 + h1.m2 + h1.m3 + h1.m4;
        let m_scale = h1.m1.abs() + h1.m2.abs() + h1.m3.abs() + h1.m4.abs();
        close_h1 = close_h1.max((m_sum - h1.m).abs() / m_scale.max(1e-300));

        let n_sum = h2.n1 + h2.n2 + h2.n3 + h2.n4;
        let n_scale = h2.n1.abs() + h2.n2.abs() + h2.n3.abs() + h2.n4.abs();
        let p_sum = h2.p1 + h2.p2 + h2.p3 + h2.p4 + h2.p5 + h2.p6;
        let p_scale = h2.p1.abs()
            + h2.p2.abs()
            + h2.p3.abs()
            + h2.p4.abs()
            + h2.p5.abs()
            + h2.p6.abs();
        close_h2 = close_h2
            .max((n_sum - h2.n).abs() / n_scale.max(1e-300))
            .max((p_sum - h2.p).abs() / p_scale.max(1e-300));
    }

    Ok(vec![
        upper("h1_transport_term_vanishes", module, vanish_h1, 1e-12),
        upper("h2_transport_terms_vanish", module, vanish_h2, 1e-12),
        upper("h1_term_sum_closure", module, close_h1, 1e-9),
        upper("h2_term_sum_closure", module, close_h2, 1e-9),
    ])
}

/// Default ensemble sizes chosen so each battery's thresholds are meaningful.
pub fn default_seed_count(which: SuiteKind) -> usize {
    match which {
        SuiteKind::Grid => 20,
        SuiteKind::Decomposition => 100,
        SuiteKind::Inequalities => 500,
        SuiteKind::Budget => 100,
        SuiteKind::All => 0, // per-battery defaults
    }
}

/// Run one battery (or all of them). `seeds` overrides the per-suite
/// default ensemble size.
pub fn check_suite(which: SuiteKind, seeds: Option<usize>) -> Result<CheckReport, SuiteError> {
    let count_for = |kind: SuiteKind| seeds.unwrap_or_else(|| default_seed_count(kind)).max(1);
    let mut checks = Vec::new();
    let mut ensembles = Vec::new();
    match which {
        SuiteKind::Grid => checks.extend(grid_battery(count_for(SuiteKind::Grid))?),
        SuiteKind::Decomposition => {
            checks.extend(decomposition_battery(count_for(SuiteKind::Decomposition))?)
        }
        SuiteKind::Inequalities => {
            let (c, e) = inequalities_battery(count_for(SuiteKind::Inequalities))?;
            checks.extend(c);
            ensembles.extend(e);
        }
        SuiteKind::Budget => checks.extend(budget_battery(count_for(SuiteKind::Budget))?),
        SuiteKind::All => {
            checks.extend(grid_battery(count_for(SuiteKind::Grid))?);
            checks.extend(decomposition_battery(count_for(SuiteKind::Decomposition))?);
            let (c, e) = inequalities_battery(count_for(SuiteKind::Inequalities))?;
            checks.extend(c);
            ensembles.extend(e);
            checks.extend(budget_battery(count_for(SuiteKind::Budget))?);
        }
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(CheckReport {
        schema: 1,
        suite: which,
        seed_count: seeds.unwrap_or_else(|| default_seed_count(which)),
        passed,
        checks,
        ensembles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse_and_reject() {
        assert_eq!("grid".parse::<SuiteKind>().unwrap(), SuiteKind::Grid);
        assert_eq!("all".parse::<SuiteKind>().unwrap(), SuiteKind::All);
        let err = "vibes".parse::<SuiteKind>().unwrap_err();
        assert!(err.to_string().contains("vibes"));
    }

    #[test]
    fn grid_battery_passes() {
        let rep = check_suite(SuiteKind::Grid, Some(5)).unwrap();
        assert!(rep.passed, "{:?}", rep.checks);
        assert_eq!(rep.checks.len(), 4);
        assert!(rep.checks.iter().all(|c| c.module == "grid"));
    }

    #[test]
    fn decomposition_battery_passes() {
        let rep = check_suite(SuiteKind::Decomposition, Some(10)).unwrap();
        assert!(rep.passed, "{:?}", rep.checks);
    }

    #[test]
    fn inequalities_battery_passes_at_contract_size() {
        // The stability checks compare maxima of two disjoint full-size
        // ensembles; smaller ensembles make that max statistic too noisy to
        // stay within 20%, so this test runs at the real default.
        let rep = check_suite(SuiteKind::Inequalities, None).unwrap();
        assert_eq!(rep.seed_count, 500);
        assert!(rep.passed, "{:?}", rep.checks);
        let sharp = rep
            .checks
            .iter()
            .find(|c| c.name == "poincare_l2_sharp_constant")
            .unwrap();
        assert!((sharp.measured - INV_TWO_PI).abs() <= 1e-9);
        assert_eq!(rep.ensembles.len(), 9);
        assert!(rep.ensembles.iter().all(|e| e.count == 500));
        assert!(rep.ensembles.iter().all(|e| e.max_ratio.is_finite()));
    }

    #[test]
    fn budget_battery_passes() {
        let rep = check_suite(SuiteKind::Budget, Some(10)).unwrap();
        assert!(rep.passed, "{:?}", rep.checks);
    }

    #[test]
    fn reports_are_deterministic_and_serializable() {
        let a = check_suite(SuiteKind::Decomposition, Some(7)).unwrap();
        let b = check_suite(SuiteKind::Decomposition, Some(7)).unwrap();
        let ja = serde_json::to_string(&a).unwrap();
        let jb = serde_json::to_string(&b).unwrap();
        assert_eq!(ja, jb);
        assert!(ja.contains("\"schema\":1"));
        assert!(ja.contains("\"module\":\"decomposition\""));
    }
}
