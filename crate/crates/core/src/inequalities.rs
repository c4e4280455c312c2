//! Empirical ratio checks for the anisotropic inequalities used in the
//! energy estimates: one-dimensional interpolation bounds applied line by
//! line, the two-dimensional triple-product and sup-norm bounds, and the
//! horizontal Poincare inequalities for zero-average oscillations.
//!
//! Each checker evaluates both sides of its inequality by direct
//! quadrature/spectral norms and reports the ratio, so the implicit
//! constants become observable. Only the explicit sqrt(2) of the 1D bounds
//! is ever asserted against; the rest are recorded.

use crate::decomposition::{oscillation, oscillation_spectrum};
use crate::grid::{Axis, Field, Grid, GridError};
use crate::norms::{d1_sobolev_norm, l2_norm, triple_product, NormError};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum InequalityError {
    #[error("variant {variant:?} expects {expected} field(s), got {got}")]
    WrongArity {
        variant: Variant,
        expected: usize,
        got: usize,
    },
    #[error("envelope width {sigma} exceeds L/6 = {limit}; Gaussian truncation unsafe")]
    EnvelopeTooWide { sigma: f64, limit: f64 },
    #[error("band limit {band} does not fit strictly inside the {n1}x{n2} grid")]
    BandTooWide { band: usize, n1: usize, n2: usize },
    #[error("every sampled ratio was degenerate (0/0)")]
    AllDegenerate,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Norm(#[from] NormError),
}

/// The inequality being measured. 1D variants run on extracted grid lines;
/// tilde variants apply `oscillation` to their first field before measuring.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Variant {
    /// ||f||_inf <= sqrt(2) ||f||^1/2 ||f'||^1/2 on x2 lines (whole-line form).
    #[serde(rename = "gg1")]
    Gg1,
    /// ||f||_inf <= sqrt(2) ||f||^1/2 ||f'||^1/2 + ||f|| on periodic x1 lines.
    #[serde(rename = "gg2")]
    Gg2,
    /// ||f_tilde||_inf <= C ||f_tilde||^1/2 ||f_tilde'||^1/2 on zero-mean x1 lines.
    #[serde(rename = "w2")]
    W2,
    /// |int f g h| <= C ||f||^1/2 (||f|| + ||d1 f||)^1/2 ||g||^1/2 ||d2 g||^1/2 ||h||.
    #[serde(rename = "ani")]
    Ani,
    /// ||f||_inf <= C ||f||^1/4 (||f|| + ||d1 f||)^1/4 ||d2 f||^1/4 (||d2 f|| + ||d1 d2 f||)^1/4.
    #[serde(rename = "2gg")]
    TwoGg,
    /// |int f_tilde g h| <= C ||f_tilde||^1/2 ||d1 f_tilde||^1/2 ||g||^1/2 ||d2 g||^1/2 ||h||.
    #[serde(rename = "an2")]
    An2,
    /// ||f_tilde||_inf <= C ||f_tilde||^1/4 ||d1 f_tilde||^1/4 ||d2 f_tilde||^1/4 ||d1 d2 f_tilde||^1/4.
    #[serde(rename = "linf_tilde")]
    LinfTilde,
    /// ||f_tilde|| <= C ||d1 f_tilde||, sharp constant 1/(2 pi) on the unit box.
    #[serde(rename = "poincare_l2")]
    PoincareL2,
    /// ||f_tilde||_inf <= C ||d1 f_tilde||_{H1}.
    #[serde(rename = "poincare_linf")]
    PoincareLinf,
}

impl Variant {
    pub const ALL: [Variant; 9] = [
        Variant::Gg1,
        Variant::Gg2,
        Variant::W2,
        Variant::Ani,
        Variant::TwoGg,
        Variant::An2,
        Variant::LinfTilde,
        Variant::PoincareL2,
        Variant::PoincareLinf,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Variant::Gg1 => "gg1",
            Variant::Gg2 => "gg2",
            Variant::W2 => "w2",
            Variant::Ani => "ani",
            Variant::TwoGg => "2gg",
            Variant::An2 => "an2",
            Variant::LinfTilde => "linf_tilde",
            Variant::PoincareL2 => "poincare_l2",
            Variant::PoincareLinf => "poincare_linf",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            Variant::Ani | Variant::An2 => 3,
            _ => 1,
        }
    }
}

/// Both sides of one inequality evaluation. `rhs` excludes the implicit
/// constant; `ratio` is lhs/rhs, or None when both sides vanish.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RatioReport {
    pub variant: Variant,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: Option<f64>,
    /// Seed of the random field(s) when the evaluation came from an ensemble.
    pub seed: Option<u64>,
}

fn report(variant: Variant, lhs: f64, rhs: f64) -> RatioReport {
    let ratio = if rhs > 0.0 { Some(lhs / rhs) } else { None };
    RatioReport {
        variant,
        lhs,
        rhs,
        ratio,
        seed: None,
    }
}

/// Per-line evaluation for the 1D variants: keep the line with the largest
/// ratio; lines with vanishing right side are skipped.
fn worst_line(
    variant: Variant,
    lines: impl Iterator<Item = (f64, f64)>,
) -> RatioReport {
    let mut best: Option<(f64, f64, f64)> = None;
    let mut fallback_lhs = 0.0f64;
    for (lhs, rhs) in lines {
        fallback_lhs = fallback_lhs.max(lhs);
        if rhs > 0.0 {
            let r = lhs / rhs;
            if best.map_or(true, |(b, _, _)| r > b) {
                best = Some((r, lhs, rhs));
            }
        }
    }
    match best {
        Some((ratio, lhs, rhs)) => RatioReport {
            variant,
            lhs,
            rhs,
            ratio: Some(ratio),
            seed: None,
        },
        None => RatioReport {
            variant,
            lhs: fallback_lhs,
            rhs: 0.0,
            ratio: None,
            seed: None,
        },
    }
}

struct LineNorms {
    sup: f64,
    l2: f64,
}

fn x1_line_norms(f: &Field, i2: usize) -> LineNorms {
    let g = f.grid();
    let n1 = g.n1();
    let dx1 = 1.0 / n1 as f64;
    let row = &f.values()[i2 * n1..(i2 + 1) * n1];
    let sup = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let l2 = (row.iter().map(|v| v * v).sum::<f64>() * dx1).sqrt();
    LineNorms { sup, l2 }
}

fn x2_line_norms(f: &Field, i1: usize) -> LineNorms {
    let g = f.grid();
    let (n1, n2) = (g.n1(), g.n2());
    let dx2 = 2.0 * g.half_width() / n2 as f64;
    let mut sup = 0.0f64;
    let mut sum = 0.0f64;
    for i2 in 0..n2 {
        let v = f.values()[i2 * n1 + i1];
        sup = sup.max(v.abs());
        sum += v * v;
    }
    LineNorms {
        sup,
        l2: (sum * dx2).sqrt(),
    }
}

fn d_field(f: &Field, axis: Axis, order: u32) -> Result<Field, GridError> {
    let g = f.grid();
    let s = g.forward(f)?;
    g.inverse(&g.derivative(&s, axis, order))
}

fn d1d2_field(f: &Field) -> Result<Field, GridError> {
    let g = f.grid();
    let s = g.forward(f)?;
    g.inverse(&g.derivative(&g.derivative(&s, Axis::X1, 1), Axis::X2, 1))
}

/// Evaluate one inequality on explicit fields. Tilde variants replace the
/// first field by its oscillation part before measuring, so callers may
/// pass arbitrary fields.
pub fn inequality_ratio(
    variant: Variant,
    fields: &[&Field],
) -> Result<RatioReport, InequalityError> {
    if fields.len() != variant.arity() {
        return Err(InequalityError::WrongArity {
            variant,
            expected: variant.arity(),
            got: fields.len(),
        });
    }
    let f = fields[0];
    let g = Arc::clone(f.grid());
    Ok(match variant {
        Variant::Gg1 => {
            let df = d_field(f, Axis::X2, 1)?;
            worst_line(
                variant,
                (0..g.n1()).map(|i1| {
                    let a = x2_line_norms(f, i1);
                    let b = x2_line_norms(&df, i1);
                    (a.sup, (a.l2 * b.l2).sqrt())
                }),
            )
        }
        Variant::Gg2 => {
            let df = d_field(f, Axis::X1, 1)?;
            worst_line(
                variant,
                (0..g.n2()).map(|i2| {
                    let a = x1_line_norms(f, i2);
                    let b = x1_line_norms(&df, i2);
                    (a.sup, (a.l2 * b.l2).sqrt() + a.l2)
                }),
            )
        }
        Variant::W2 => {
            let ft = oscillation(f);
            let df = d_field(&ft, Axis::X1, 1)?;
            worst_line(
                variant,
                (0..g.n2()).map(|i2| {
                    let a = x1_line_norms(&ft, i2);
                    let b = x1_line_norms(&df, i2);
                    (a.sup, (a.l2 * b.l2).sqrt())
                }),
            )
        }
        Variant::Ani => {
            let (gg, hh) = (fields[1], fields[2]);
            let lhs = triple_product(f, gg, hh)?.abs();
            let nf = l2_norm(f);
            let nd1f = l2_norm(&d_field(f, Axis::X1, 1)?);
            let ng = l2_norm(gg);
            let nd2g = l2_norm(&d_field(gg, Axis::X2, 1)?);
            let rhs = nf.sqrt() * (nf + nd1f).sqrt() * ng.sqrt() * nd2g.sqrt() * l2_norm(hh);
            report(variant, lhs, rhs)
        }
        Variant::An2 => {
            let ft = oscillation(f);
            let (gg, hh) = (fields[1], fields[2]);
            let lhs = triple_product(&ft, gg, hh)?.abs();
            let nf = l2_norm(&ft);
            let nd1f = l2_norm(&d_field(&ft, Axis::X1, 1)?);
            let ng = l2_norm(gg);
            let nd2g = l2_norm(&d_field(gg, Axis::X2, 1)?);
            let rhs = nf.sqrt() * nd1f.sqrt() * ng.sqrt() * nd2g.sqrt() * l2_norm(hh);
            report(variant, lhs, rhs)
        }
        Variant::TwoGg => {
            let lhs = f.max_abs();
            let nf = l2_norm(f);
            let nd1 = l2_norm(&d_field(f, Axis::X1, 1)?);
            let nd2 = l2_norm(&d_field(f, Axis::X2, 1)?);
            let nd12 = l2_norm(&d1d2_field(f)?);
            let rhs = nf.sqrt().sqrt()
                * (nf + nd1).sqrt().sqrt()
                * nd2.sqrt().sqrt()
                * (nd2 + nd12).sqrt().sqrt();
            report(variant, lhs, rhs)
        }
        Variant::LinfTilde => {
            let ft = oscillation(f);
            let lhs = ft.max_abs();
            let nf = l2_norm(&ft);
            let nd1 = l2_norm(&d_field(&ft, Axis::X1, 1)?);
            let nd2 = l2_norm(&d_field(&ft, Axis::X2, 1)?);
            let nd12 = l2_norm(&d1d2_field(&ft)?);
            let rhs = (nf * nd1 * nd2 * nd12).sqrt().sqrt();
            report(variant, lhs, rhs)
        }
        Variant::PoincareL2 => {
            let ft = oscillation(f);
            let lhs = l2_norm(&ft);
            let rhs = l2_norm(&d_field(&ft, Axis::X1, 1)?);
            report(variant, lhs, rhs)
        }
        Variant::PoincareLinf => {
            let ft = oscillation(f);
            let lhs = ft.max_abs();
            let s = g.forward(&ft)?;
            let rhs = d1_sobolev_norm(&oscillation_spectrum(&s), 1.0)?;
            report(variant, lhs, rhs)
        }
    })
}

/// Seeded band-limited random field with a Gaussian x2 envelope. The band
/// limit is exact in m1; the envelope spreads m2 content, with spill below
/// 1e-12 of the peak once sigma <= L/6. Identical seeds give bit-identical
/// fields.
pub fn random_field(
    grid: &Arc<Grid>,
    seed: u64,
    band_limit: usize,
    sigma: f64,
) -> Result<Field, InequalityError> {
    let l = grid.half_width();
    if !(sigma > 0.0) || sigma > l / 6.0 {
        return Err(InequalityError::EnvelopeTooWide {
            sigma,
            limit: l / 6.0,
        });
    }
    let b = band_limit;
    if b == 0 || b >= grid.n1() / 2 || b >= grid.n2() / 2 {
        return Err(InequalityError::BandTooWide {
            band: b,
            n1: grid.n1(),
            n2: grid.n2(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let mut s = grid.zero_spectrum();
    let bi = b as i64;
    for m1 in 0..=bi {
        for m2 in -bi..=bi {
            if m1 == 0 && m2 < 0 {
                continue;
            }
            let c = if m1 == 0 && m2 == 0 {
                Complex64::new(draw(), 0.0)
            } else {
                Complex64::new(draw(), draw()) * std::f64::consts::FRAC_1_SQRT_2
            };
            s.set(m1, m2, c);
            if m1 != 0 || m2 != 0 {
                s.set(-m1, -m2, c.conj());
            }
        }
    }
    let mut f = grid.inverse(&s)?;
    let n1 = grid.n1();
    for (i2, &x2) in grid.x2_nodes().iter().enumerate() {
        let env = (-(x2 / sigma) * (x2 / sigma)).exp();
        for v in &mut f.values_mut()[i2 * n1..(i2 + 1) * n1] {
            *v *= env;
        }
    }
    Ok(f)
}

/// Project a field onto its |m1| = 1 modes; these realize the sharp
/// horizontal Poincare constant 1/(2 pi).
pub fn project_first_harmonic(f: &Field) -> Result<Field, GridError> {
    let g = f.grid();
    let mut s = g.forward(f)?;
    let n1 = g.n1();
    for (i, c) in s.coeffs_mut().iter_mut().enumerate() {
        let m1 = if i % n1 < n1 / 2 {
            (i % n1) as i64
        } else {
            (i % n1) as i64 - n1 as i64
        };
        if m1.abs() != 1 {
            *c = Complex64::new(0.0, 0.0);
        }
    }
    g.inverse(&s)
}

/// Aggregate statistics of one variant over an ensemble of seeded fields.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EnsembleReport {
    pub variant: Variant,
    pub count: usize,
    pub max_ratio: f64,
    pub argmax_seed: u64,
    pub median_ratio: f64,
    /// Ratio evaluations that were 0/0 and carry no information.
    pub undefined: usize,
}

/// Run `seed_count` seeded evaluations of one variant. Multi-field variants
/// derive one field per slot from the seed. For the sharp L2 Poincare
/// constant, every 50th field is projected onto |m1| = 1 so the ensemble
/// maximum attains 1/(2 pi) rather than merely approaching it.
pub fn ensemble_ratios(
    grid: &Arc<Grid>,
    variant: Variant,
    seed_count: usize,
    base_seed: u64,
) -> Result<EnsembleReport, InequalityError> {
    let sigma = grid.half_width() / 8.0;
    let band = 6usize.min(grid.n1() / 2 - 1).min(grid.n2() / 2 - 1);
    let mut ratios: Vec<(f64, u64)> = Vec::with_capacity(seed_count);
    let mut undefined = 0usize;
    for i in 0..seed_count {
        let seed = base_seed.wrapping_add(i as u64);
        let r = if variant.arity() == 1 {
            let mut f = random_field(grid, seed, band, sigma)?;
            if variant == Variant::PoincareL2 && i % 50 == 0 {
                f = project_first_harmonic(&f)?;
            }
            inequality_ratio(variant, &[&f])?
        } else {
            let sub = |j: u64| seed.wrapping_mul(3).wrapping_add(j);
            let f = random_field(grid, sub(0), band, sigma)?;
            let g2 = random_field(grid, sub(1), band, sigma)?;
            let h = random_field(grid, sub(2), band, sigma)?;
            inequality_ratio(variant, &[&f, &g2, &h])?
        };
        match r.ratio {
            Some(v) => ratios.push((v, seed)),
            None => undefined += 1,
        }
    }
    if ratios.is_empty() {
        return Err(InequalityError::AllDegenerate);
    }
    let (mut max_ratio, mut argmax_seed) = ratios[0];
    for &(v, s) in &ratios[1..] {
        if v > max_ratio {
            max_ratio = v;
            argmax_seed = s;
        }
    }
    let mut sorted: Vec<f64> = ratios.iter().map(|&(v, _)| v).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("ratios are finite"));
    let median_ratio = sorted[sorted.len() / 2];
    Ok(EnsembleReport {
        variant,
        count: seed_count,
        max_ratio,
        argmax_seed,
        median_ratio,
        undefined,
    })
}
