//! Energy bookkeeping over trajectories: the monitored record emitted by the
//! run loop, exponential decay fitting, and the exact integral identities
//! behind the H1/H2 energy estimates.
//!
//! The budget functions evaluate both sides of
//!
//!   d/dt (|om|^2 + |grad th|^2)/2 + nu |d1 om|^2 + kappa |d1 grad th|^2 = M
//!   d/dt (|grad om|^2 + |lap th|^2)/2 + nu |d1 grad om|^2
//!                                     + kappa |d1 lap th|^2 = N + P
//!
//! with every M/N/P term an explicit quadrature, so closure can be checked
//! against centered time differences of stored states. The grid keeps
//! 3 K < n on the dealiased band, hence triple-product quadratures are exact
//! integrals and the orthogonality cancellations (the bar/bar terms below)
//! hold to rounding, not just to truncation order.

use crate::decomposition::{horizontal_average, oscillation, profile_from_spectrum, Profile};
use crate::dynamics::{velocity_from_vorticity, PhysParams, State};
use crate::grid::{Axis, Field, GridError, Spectrum};
use crate::norms::{
    inner_product, sobolev_norm_spectrum, triple_product, velocity_d1_sobolev_norm,
    velocity_sobolev_norm, weighted_norm_spectrum, NormError,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("budget window needs at least 3 consecutive states, got {0}")]
    WindowTooShort(usize),
    #[error("budget window spacing is not uniform: {0} vs {1}")]
    UnevenWindow(f64, f64),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Norm(#[from] NormError),
}

/// One monitored row of a run: norms, energy functional, cumulative
/// dissipation, and the invariant checks evaluated at this output time.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub step: usize,
    /// E(t) = sup_{tau<=t}(|u|_H2^2 + |th|_H2^2) + nu int |d1 u|_H2^2
    ///        + kappa int |d1 th|_H2^2, nondecreasing by construction.
    pub energy: f64,
    pub l2_u: f64,
    pub l2_theta: f64,
    pub h1_u: f64,
    pub h1_theta: f64,
    pub h2_u: f64,
    pub h2_theta: f64,
    /// ||(u_tilde, theta_tilde)||_H1, the decaying quantity.
    pub h1_osc: f64,
    pub diss_u_cum: f64,
    pub diss_theta_cum: f64,
    pub bar_u2_max: f64,
    pub div_max: f64,
    pub tail_mass: f64,
    pub cfl: f64,
    pub flags: Vec<String>,
}

/// Least-squares exponential rate over a log-linear window.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DecayFit {
    /// Decay rate: values behave like exp(-c t) on the window.
    pub c: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub t0: f64,
    pub t1: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DecayFitResult {
    Fitted(DecayFit),
    /// Not enough samples above the round-off floor inside the window.
    Unavailable { usable: usize, needed: usize },
}

impl DecayFitResult {
    pub fn fitted(&self) -> Option<&DecayFit> {
        match self {
            DecayFitResult::Fitted(f) => Some(f),
            DecayFitResult::Unavailable { .. } => None,
        }
    }
}

/// Values below this are treated as round-off noise and excluded from fits.
pub const DECAY_FLOOR: f64 = 1e-12;
/// Default transient cutoff: samples before this time are excluded.
pub const DECAY_T0: f64 = 1.0;
const DECAY_MIN_SAMPLES: usize = 10;

/// Fit log(value) = intercept - c * t over the samples inside `window`
/// (default [1, inf)) that sit above the 1e-12 floor. Needs at least 10
/// usable samples; fewer yields `Unavailable` rather than an error.
pub fn decay_fit(series: &[(f64, f64)], window: Option<(f64, f64)>) -> DecayFitResult {
    let (w0, w1) = window.unwrap_or((DECAY_T0, f64::INFINITY));
    let used: Vec<(f64, f64)> = series
        .iter()
        .filter(|(t, v)| *t >= w0 && *t <= w1 && *v > DECAY_FLOOR && v.is_finite())
        .map(|&(t, v)| (t, v.ln()))
        .collect();
    if used.len() < DECAY_MIN_SAMPLES {
        return DecayFitResult::Unavailable {
            usable: used.len(),
            needed: DECAY_MIN_SAMPLES,
        };
    }
    let n = used.len() as f64;
    let mean_t = used.iter().map(|(t, _)| t).sum::<f64>() / n;
    let mean_y = used.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (t, y) in &used {
        let (dt, dy) = (t - mean_t, y - mean_y);
        sxx += dt * dt;
        sxy += dt * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        // all samples at one time: no slope information
        return DecayFitResult::Unavailable {
            usable: 1,
            needed: DECAY_MIN_SAMPLES,
        };
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_t;
    // constant series: zero slope fits exactly
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        ((sxy * sxy) / (sxx * syy)).clamp(0.0, 1.0)
    };
    let t0 = used.iter().map(|(t, _)| *t).fold(f64::INFINITY, f64::min);
    let t1 = used.iter().map(|(t, _)| *t).fold(f64::NEG_INFINITY, f64::max);
    DecayFitResult::Fitted(DecayFit {
        c: -slope,
        intercept,
        r_squared,
        t0,
        t1,
        samples: used.len(),
    })
}

/// E(t) along a trajectory of states: running supremum of the squared H2
/// size plus trapezoid-accumulated horizontal dissipation integrals.
/// Nondecreasing in t by construction.
pub fn energy_functional(
    states: &[State],
    params: &PhysParams,
) -> Result<Vec<(f64, f64)>, DiagnosticsError> {
    let mut out = Vec::with_capacity(states.len());
    let mut sup = 0.0f64;
    let mut diss = 0.0f64;
    let mut prev: Option<(f64, f64)> = None;
    for s in states {
        let h2_sq = velocity_sobolev_norm(&s.omega_hat, 2.0)?.powi(2)
            + sobolev_norm_spectrum(&s.theta_hat, 2.0)?.powi(2);
        let integrand = params.nu * velocity_d1_sobolev_norm(&s.omega_hat, 2.0)?.powi(2)
            + params.kappa * crate::norms::d1_sobolev_norm(&s.theta_hat, 2.0)?.powi(2);
        if let Some((t_prev, g_prev)) = prev {
            diss += 0.5 * (g_prev + integrand) * (s.t - t_prev);
        }
        sup = sup.max(h2_sq);
        out.push((s.t, sup + diss));
        prev = Some((s.t, integrand));
    }
    Ok(out)
}

/// Bar/tilde decomposition of a triple quadrature int f g h dx where the
/// middle factor carries the horizontal derivative: g is reduced to its
/// oscillation, f and h are split, and the four components are returned.
/// Their sum equals triple_product(f, osc g, h); the (bar, bar) component
/// is a pure x1-line integral of osc g, hence zero to rounding.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct SplitComponents {
    pub bar_bar: f64,
    pub bar_tilde: f64,
    pub tilde_bar: f64,
    pub tilde_tilde: f64,
}

impl SplitComponents {
    pub fn sum(&self) -> f64 {
        self.bar_bar + self.bar_tilde + self.tilde_bar + self.tilde_tilde
    }
}

pub fn bar_tilde_split(f: &Field, g: &Field, h: &Field) -> Result<SplitComponents, NormError> {
    let g_osc = oscillation(g);
    let f_bar = horizontal_average(f).broadcast();
    let f_osc = oscillation(f);
    let h_bar = horizontal_average(h).broadcast();
    let h_osc = oscillation(h);
    Ok(SplitComponents {
        bar_bar: triple_product(&f_bar, &g_osc, &h_bar)?,
        bar_tilde: triple_product(&f_bar, &g_osc, &h_osc)?,
        tilde_bar: triple_product(&f_osc, &g_osc, &h_bar)?,
        tilde_tilde: triple_product(&f_osc, &g_osc, &h_osc)?,
    })
}

/// H1-level budget: M = -int grad(u . grad theta) . grad theta, its four
/// integration-by-parts pieces, the bar/tilde refinements used to identify
/// the vanishing component, and the predicted rate of
/// (|om|^2 + |grad th|^2)/2.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct H1Budget {
    /// Independent route: -int grad(dealias(u . grad th)) . grad th.
    pub m: f64,
    /// M1 = -int d1 u1 d1 th d1 th
    pub m1: f64,
    /// M2 = -int d1 u2 d2 th d1 th
    pub m2: f64,
    /// M3 = -int d2 u1 d1 th d2 th
    pub m3: f64,
    /// M4 = -int d2 u2 d2 th d2 th
    pub m4: f64,
    /// M3 split over (bar/tilde u1) x (bar/tilde theta); m31 vanishes.
    pub m31: f64,
    pub m32: f64,
    pub m33: f64,
    pub m34: f64,
    /// M4 via d2 u2 = -d1 u1: cross term (x2) and pure oscillation term.
    pub m41: f64,
    pub m42: f64,
    /// nu |d1 om|^2 + kappa |d1 grad th|^2
    pub dissipation: f64,
    /// m - dissipation: predicted d/dt of `energy`.
    pub lhs_rate: f64,
    /// (|om|^2 + |grad th|^2)/2
    pub energy: f64,
}

/// H2-level budget: N = -int grad om . grad u . grad om and
/// P = -int lap(u . grad th) lap th, with their splits.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct H2Budget {
    /// Independent route: int (u . grad om) lap om.
    pub n: f64,
    pub n1: f64,
    pub n2: f64,
    pub n3: f64,
    pub n4: f64,
    /// N3 split; n31 vanishes.
    pub n31: f64,
    pub n32: f64,
    pub n33: f64,
    pub n34: f64,
    /// Independent route: -int lap(dealias(u . grad th)) lap th, spectral.
    pub p: f64,
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
    pub p4: f64,
    pub p5: f64,
    pub p6: f64,
    /// Splits of P1, P2, P5, P6; the *1 components vanish.
    pub p11: f64,
    pub p12: f64,
    pub p13: f64,
    pub p14: f64,
    pub p21: f64,
    pub p22: f64,
    pub p23: f64,
    pub p24: f64,
    pub p51: f64,
    pub p52: f64,
    pub p53: f64,
    pub p54: f64,
    pub p61: f64,
    pub p62: f64,
    pub p63: f64,
    pub p64: f64,
    /// nu |d1 grad om|^2 + kappa |d1 lap th|^2
    pub dissipation: f64,
    /// n + p - dissipation: predicted d/dt of `energy`.
    pub lhs_rate: f64,
    /// (|grad om|^2 + |lap th|^2)/2
    pub energy: f64,
    /// Largest coefficient magnitude on the outer 10% of the kept band,
    /// relative to the spectrum peak. Fourth derivatives amplify the tail,
    /// so a visible tail means the budget is under-resolved.
    pub tail_ratio: f64,
    pub tail_flagged: bool,
}

fn grad_pair(s: &Spectrum) -> Result<(Field, Field), GridError> {
    let g = s.grid();
    let d1 = g.derivative(s, Axis::X1, 1);
    let d2 = g.derivative(s, Axis::X2, 1);
    g.inverse_pair(&d1, &d2)
}

fn laplacian_spectrum(s: &Spectrum) -> Spectrum {
    let g = s.grid();
    let (n1, k1t, k2t) = (g.n1(), g.k1_table(), g.k2_table());
    let mut out = s.clone();
    for (i, c) in out.coeffs_mut().iter_mut().enumerate() {
        let (k1, k2) = (k1t[i % n1], k2t[i / n1]);
        *c *= -(k1 * k1 + k2 * k2);
    }
    out
}

/// 2L * sum_k w(k1, k2) Re(a conj(b)): the quadrature pairing in
/// coefficient space.
fn spectral_pairing(a: &Spectrum, b: &Spectrum, w: impl Fn(f64, f64) -> f64) -> f64 {
    let g = a.grid();
    let (n1, k1t, k2t) = (g.n1(), g.k1_table(), g.k2_table());
    let two_l = 2.0 * g.half_width();
    let mut acc = 0.0;
    for (i, (ca, cb)) in a.coeffs().iter().zip(b.coeffs()).enumerate() {
        let (k1, k2) = (k1t[i % n1], k2t[i / n1]);
        acc += w(k1, k2) * (ca.re * cb.re + ca.im * cb.im);
    }
    acc * two_l
}

fn product_field(a: &Field, b: &Field) -> Field {
    let mut out = a.clone();
    for (o, v) in out.values_mut().iter_mut().zip(b.values()) {
        *o *= v;
    }
    out
}

fn add_product(acc: &mut Field, a: &Field, b: &Field) {
    for ((o, x), y) in acc.values_mut().iter_mut().zip(a.values()).zip(b.values()) {
        *o += x * y;
    }
}

fn bar_osc(f: &Field) -> (Field, Field) {
    (horizontal_average(f).broadcast(), oscillation(f))
}

pub fn h1_budget(state: &State, params: &PhysParams) -> Result<H1Budget, DiagnosticsError> {
    let g = state.grid().clone();
    let om = &state.omega_hat;
    let th = &state.theta_hat;

    let (u1_hat, u2_hat) = velocity_from_vorticity(state);
    let (u1, u2) = g.inverse_pair(&u1_hat, &u2_hat)?;
    let (d1u1, d2u1) = grad_pair(&u1_hat)?;
    let (d1u2, d2u2) = grad_pair(&u2_hat)?;
    let (d1th, d2th) = grad_pair(th)?;

    let m1 = -triple_product(&d1u1, &d1th, &d1th)?;
    let m2 = -triple_product(&d1u2, &d2th, &d1th)?;
    let m3 = -triple_product(&d2u1, &d1th, &d2th)?;
    let m4 = -triple_product(&d2u2, &d2th, &d2th)?;

    // M3 over (bar/tilde of d2 u1) x (bar/tilde of d2 theta); the middle
    // factor d1 theta is its own oscillation.
    let (d2u1_bar, d2u1_osc) = bar_osc(&d2u1);
    let (d2th_bar, d2th_osc) = bar_osc(&d2th);
    let m31 = -triple_product(&d2u1_bar, &d1th, &d2th_bar)?;
    let m32 = -triple_product(&d2u1_bar, &d1th, &d2th_osc)?;
    let m33 = -triple_product(&d2u1_osc, &d1th, &d2th_bar)?;
    let m34 = -triple_product(&d2u1_osc, &d1th, &d2th_osc)?;

    // M4 via d2 u2 = -d1 u1 (exact in coefficients): cross + oscillation.
    let m41 = 2.0 * triple_product(&d1u1, &d2th_osc, &d2th_bar)?;
    let m42 = triple_product(&d1u1, &d2th_osc, &d2th_osc)?;

    // Independent route for M through the dealiased advection product,
    // the same object the solver injects.
    let mut adv = product_field(&u1, &d1th);
    add_product(&mut adv, &u2, &d2th);
    let adv_hat = g.dealias(&g.forward(&adv)?);
    let (adv1, adv2) = grad_pair(&adv_hat)?;
    let m = -(inner_product(&adv1, &d1th)? + inner_product(&adv2, &d2th)?);

    let diss_u = weighted_norm_spectrum(om, |k1, _| k1 * k1).powi(2);
    let diss_th = weighted_norm_spectrum(th, |k1, k2| k1 * k1 * (k1 * k1 + k2 * k2)).powi(2);
    let dissipation = params.nu * diss_u + params.kappa * diss_th;
    let energy = 0.5
        * (weighted_norm_spectrum(om, |_, _| 1.0).powi(2)
            + weighted_norm_spectrum(th, |k1, k2| k1 * k1 + k2 * k2).powi(2));

    Ok(H1Budget {
        m,
        m1,
        m2,
        m3,
        m4,
        m31,
        m32,
        m33,
        m34,
        m41,
        m42,
        dissipation,
        lhs_rate: m - dissipation,
        energy,
    })
}

/// Relative size of the outer 10% of the kept band.
fn spectral_tail_ratio(s: &Spectrum) -> f64 {
    let g = s.grid();
    let n1 = g.n1();
    let (cut1, cut2) = (g.m1_cut(), g.m2_cut());
    let mut peak = 0.0f64;
    let mut tail = 0.0f64;
    for (i, c) in s.coeffs().iter().enumerate() {
        if !g.dealias_mask()[i] {
            continue;
        }
        let m1 = g.m1_at(i % n1).abs();
        let m2 = g.m2_at(i / n1).abs();
        let mag = c.norm();
        peak = peak.max(mag);
        if m1 * 10 >= cut1 * 9 || m2 * 10 >= cut2 * 9 {
            tail = tail.max(mag);
        }
    }
    if peak == 0.0 {
        0.0
    } else {
        tail / peak
    }
}

pub fn h2_budget(state: &State, params: &PhysParams) -> Result<H2Budget, DiagnosticsError> {
    let g = state.grid().clone();
    let om = &state.omega_hat;
    let th = &state.theta_hat;

    let (u1_hat, u2_hat) = velocity_from_vorticity(state);
    let (u1, u2) = g.inverse_pair(&u1_hat, &u2_hat)?;
    let (d1u1, d2u1) = grad_pair(&u1_hat)?;
    let (d1u2, d2u2) = grad_pair(&u2_hat)?;
    let (d1om, d2om) = grad_pair(om)?;
    let (d1th, d2th) = grad_pair(th)?;
    // second derivatives of theta and both Laplacians
    let d11th_hat = g.derivative(th, Axis::X1, 2);
    let d12th_hat = g.derivative(&g.derivative(th, Axis::X1, 1), Axis::X2, 1);
    let (d11th, d12th) = g.inverse_pair(&d11th_hat, &d12th_hat)?;
    let d22th_hat = g.derivative(th, Axis::X2, 2);
    let lapth_hat = laplacian_spectrum(th);
    let (d22th, lapth) = g.inverse_pair(&d22th_hat, &lapth_hat)?;
    let lapom_hat = laplacian_spectrum(om);
    let lapom = g.inverse(&lapom_hat)?;

    let n1 = -triple_product(&d1u1, &d1om, &d1om)?;
    let n2 = -triple_product(&d1u2, &d1om, &d2om)?;
    let n3 = -triple_product(&d2u1, &d1om, &d2om)?;
    let n4 = -triple_product(&d2u2, &d2om, &d2om)?;
    // independent route: N = int (u . grad om) lap om
    let n = triple_product(&u1, &d1om, &lapom)? + triple_product(&u2, &d2om, &lapom)?;

    let (d2u1_bar, d2u1_osc) = bar_osc(&d2u1);
    let (d2om_bar, d2om_osc) = bar_osc(&d2om);
    let n31 = -triple_product(&d2u1_bar, &d1om, &d2om_bar)?;
    let n32 = -triple_product(&d2u1_bar, &d1om, &d2om_osc)?;
    let n33 = -triple_product(&d2u1_osc, &d1om, &d2om_bar)?;
    let n34 = -triple_product(&d2u1_osc, &d1om, &d2om_osc)?;

    // lap u = (-d2 om, d1 om) through the stream function, exact in
    // coefficients, so the P terms reuse the vorticity gradient fields.
    let mut lapu1 = d2om.clone();
    lapu1.scale(-1.0);
    let p1 = -triple_product(&lapu1, &d1th, &lapth)?;
    let p2 = -triple_product(&d1om, &d2th, &lapth)?;
    let p3 = -2.0 * triple_product(&d1u1, &d11th, &lapth)?;
    let p4 = -2.0 * triple_product(&d1u2, &d12th, &lapth)?;
    let p5 = -2.0 * triple_product(&d2u1, &d12th, &lapth)?;
    let p6 = -2.0 * triple_product(&d2u2, &d22th, &lapth)?;
    // independent route: P = -int lap(dealias(u . grad th)) lap th,
    // evaluated as a spectral pairing with weight |k|^4.
    let mut adv = product_field(&u1, &d1th);
    add_product(&mut adv, &u2, &d2th);
    let adv_hat = g.dealias(&g.forward(&adv)?);
    let p = -spectral_pairing(&adv_hat, th, |k1, k2| {
        let ksq = k1 * k1 + k2 * k2;
        ksq * ksq
    });

    let (lapu1_bar, lapu1_osc) = bar_osc(&lapu1);
    let (lapth_bar, lapth_osc) = bar_osc(&lapth);
    let p11 = -triple_product(&lapu1_bar, &d1th, &lapth_bar)?;
    let p12 = -triple_product(&lapu1_bar, &d1th, &lapth_osc)?;
    let p13 = -triple_product(&lapu1_osc, &d1th, &lapth_bar)?;
    let p14 = -triple_product(&lapu1_osc, &d1th, &lapth_osc)?;

    let (d2th_bar, d2th_osc) = bar_osc(&d2th);
    let p21 = -triple_product(&d1om, &d2th_bar, &lapth_bar)?;
    let p22 = -triple_product(&d1om, &d2th_bar, &lapth_osc)?;
    let p23 = -triple_product(&d1om, &d2th_osc, &lapth_bar)?;
    let p24 = -triple_product(&d1om, &d2th_osc, &lapth_osc)?;

    let p51 = -2.0 * triple_product(&d2u1_bar, &d12th, &lapth_bar)?;
    let p52 = -2.0 * triple_product(&d2u1_bar, &d12th, &lapth_osc)?;
    let p53 = -2.0 * triple_product(&d2u1_osc, &d12th, &lapth_bar)?;
    let p54 = -2.0 * triple_product(&d2u1_osc, &d12th, &lapth_osc)?;

    let (d22th_bar, d22th_osc) = bar_osc(&d22th);
    let p61 = 2.0 * triple_product(&d1u1, &d22th_bar, &lapth_bar)?;
    let p62 = 2.0 * triple_product(&d1u1, &d22th_bar, &lapth_osc)?;
    let p63 = 2.0 * triple_product(&d1u1, &d22th_osc, &lapth_bar)?;
    let p64 = 2.0 * triple_product(&d1u1, &d22th_osc, &lapth_osc)?;

    let diss_u = weighted_norm_spectrum(om, |k1, k2| k1 * k1 * (k1 * k1 + k2 * k2)).powi(2);
    let diss_th = weighted_norm_spectrum(th, |k1, k2| {
        let ksq = k1 * k1 + k2 * k2;
        k1 * k1 * ksq * ksq
    })
    .powi(2);
    let dissipation = params.nu * diss_u + params.kappa * diss_th;
    let energy = 0.5
        * (weighted_norm_spectrum(om, |k1, k2| k1 * k1 + k2 * k2).powi(2)
            + weighted_norm_spectrum(th, |k1, k2| {
                let ksq = k1 * k1 + k2 * k2;
                ksq * ksq
            })
            .powi(2));

    let tail_ratio = spectral_tail_ratio(om).max(spectral_tail_ratio(th));
    let tail_flagged = tail_ratio > 1e-8;

    Ok(H2Budget {
        n,
        n1,
        n2,
        n3,
        n4,
        n31,
        n32,
        n33,
        n34,
        p,
        p1,
        p2,
        p3,
        p4,
        p5,
        p6,
        p11,
        p12,
        p13,
        p14,
        p21,
        p22,
        p23,
        p24,
        p51,
        p52,
        p53,
        p54,
        p61,
        p62,
        p63,
        p64,
        dissipation,
        lhs_rate: n + p - dissipation,
        energy,
        tail_ratio,
        tail_flagged,
    })
}

/// One budget row per state; interior rows carry closure residuals
/// |centered-difference of energy - lhs_rate|, which converge at O(dt^2).
#[derive(Debug, Clone, serde::Serialize)]
pub struct BudgetRow {
    pub t: f64,
    pub h1: H1Budget,
    pub h2: H2Budget,
    pub h1_closure: Option<f64>,
    pub h2_closure: Option<f64>,
}

pub fn budget_rows(
    window: &[State],
    params: &PhysParams,
) -> Result<Vec<BudgetRow>, DiagnosticsError> {
    if window.len() < 3 {
        return Err(DiagnosticsError::WindowTooShort(window.len()));
    }
    let dt = window[1].t - window[0].t;
    for pair in window.windows(2) {
        let d = pair[1].t - pair[0].t;
        if (d - dt).abs() > 1e-12 * dt.abs().max(1.0) {
            return Err(DiagnosticsError::UnevenWindow(dt, d));
        }
    }
    let budgets: Vec<(H1Budget, H2Budget)> = window
        .iter()
        .map(|s| Ok((h1_budget(s, params)?, h2_budget(s, params)?)))
        .collect::<Result<_, DiagnosticsError>>()?;
    let mut rows = Vec::with_capacity(window.len());
    for (i, (h1, h2)) in budgets.iter().enumerate() {
        let (mut h1_closure, mut h2_closure) = (None, None);
        if i > 0 && i + 1 < window.len() {
            let d_h1 = (budgets[i + 1].0.energy - budgets[i - 1].0.energy) / (2.0 * dt);
            let d_h2 = (budgets[i + 1].1.energy - budgets[i - 1].1.energy) / (2.0 * dt);
            h1_closure = Some((d_h1 - h1.lhs_rate).abs());
            h2_closure = Some((d_h2 - h2.lhs_rate).abs());
        }
        rows.push(BudgetRow {
            t: window[i].t,
            h1: *h1,
            h2: *h2,
            h1_closure,
            h2_closure,
        });
    }
    Ok(rows)
}

/// Worst closure residuals over the interior of a uniformly spaced window.
pub fn budget_closure(
    window: &[State],
    params: &PhysParams,
) -> Result<(f64, f64), DiagnosticsError> {
    let rows = budget_rows(window, params)?;
    let h1 = rows
        .iter()
        .filter_map(|r| r.h1_closure)
        .fold(0.0f64, f64::max);
    let h2 = rows
        .iter()
        .filter_map(|r| r.h2_closure)
        .fold(0.0f64, f64::max);
    Ok((h1, h2))
}

/// How stratified the temperature is: the L2 fraction carried by the
/// oscillation, plus the horizontal-average profile itself.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StratificationMetrics {
    /// ||theta_tilde|| / ||theta||, None when theta vanishes.
    pub osc_fraction: Option<f64>,
    #[serde(skip)]
    pub theta_bar: Profile,
}

pub fn stratification_metrics(
    theta_hat: &Spectrum,
) -> Result<StratificationMetrics, DiagnosticsError> {
    let g = theta_hat.grid();
    let n1 = g.n1();
    let mut total = 0.0f64;
    let mut osc = 0.0f64;
    for (i, c) in theta_hat.coeffs().iter().enumerate() {
        let e = c.norm_sqr();
        total += e;
        if i % n1 != 0 {
            osc += e;
        }
    }
    let osc_fraction = if total > 0.0 {
        Some((osc / total).sqrt().min(1.0))
    } else {
        None
    };
    Ok(StratificationMetrics {
        osc_fraction,
        theta_bar: profile_from_spectrum(theta_hat)?,
    })
}
