//! Time integration of the perturbation system in vorticity form:
//!
//!   dt omega + u . grad omega = nu d11 omega + d1 theta
//!   dt theta + u . grad theta + u2 = kappa d11 theta
//!   u = (-d2 psi, d1 psi),  lap psi = omega
//!
//! The horizontal dissipation is diagonal in Fourier space, so it is applied
//! exactly through integrating factors exp(-nu k1^2 t) / exp(-kappa k1^2 t);
//! only advection and the buoyancy pair remain explicit, advanced with a
//! three-stage third-order Runge-Kutta scheme. Advection products are formed
//! pseudo-spectrally and dealiased, and each transform carries two real
//! fields packed into one complex FFT.

use crate::diagnostics::DiagnosticsRecord;
use crate::grid::{unmix_pair, Field, Grid, GridError, Spectrum};
use crate::norms::{l2_norm_spectrum, sobolev_norm_spectrum, velocity_sobolev_norm, NormError};
use rustfft::num_complex::Complex64;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("{name} must be finite and nonnegative, got {value}")]
    BadParam { name: &'static str, value: f64 },
    #[error("dt must be positive and finite, got {0}")]
    BadDt(f64),
    #[error("output_every must be at least 1")]
    BadCadence,
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("state became non-finite at step {step}, t = {t}")]
    NonFinite { step: usize, t: f64 },
    #[error("residual window needs at least 3 consecutive states, got {0}")]
    WindowTooShort(usize),
    #[error("residual window spacing is not uniform: {0} vs {1}")]
    UnevenWindow(f64, f64),
    #[error("snapshot sink: {0}")]
    Sink(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Norm(#[from] NormError),
}

/// Physical parameters. Dissipation acts only through d11, so nu and kappa
/// are horizontal coefficients; the buoyancy pair (d1 theta in the vorticity
/// equation, -u2 in the temperature equation) can be switched off together
/// for pure heat-decay oracle runs.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct PhysParams {
    pub nu: f64,
    pub kappa: f64,
    pub buoyancy_coupling: bool,
}

impl PhysParams {
    pub fn new(nu: f64, kappa: f64) -> Self {
        Self {
            nu,
            kappa,
            buoyancy_coupling: true,
        }
    }

    pub fn validate(&self) -> Result<(), DynamicsError> {
        for (name, value) in [("nu", self.nu), ("kappa", self.kappa)] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(DynamicsError::BadParam { name, value });
            }
        }
        Ok(())
    }
}

/// Prognostic state: vorticity and temperature coefficients at time t.
#[derive(Debug, Clone)]
pub struct State {
    pub omega_hat: Spectrum,
    pub theta_hat: Spectrum,
    pub t: f64,
}

impl State {
    pub fn new(omega_hat: Spectrum, theta_hat: Spectrum, t: f64) -> Result<Self, GridError> {
        if !Arc::ptr_eq(omega_hat.grid(), theta_hat.grid()) {
            return Err(GridError::GridMismatch);
        }
        Ok(Self {
            omega_hat,
            theta_hat,
            t,
        })
    }

    pub fn zero(grid: &Arc<Grid>) -> Self {
        Self {
            omega_hat: grid.zero_spectrum(),
            theta_hat: grid.zero_spectrum(),
            t: 0.0,
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.omega_hat.grid()
    }

    pub fn is_finite(&self) -> bool {
        self.omega_hat
            .coeffs()
            .iter()
            .chain(self.theta_hat.coeffs())
            .all(|c| c.re.is_finite() && c.im.is_finite())
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct StepperConfig {
    pub dt: f64,
    pub output_every: usize,
}

impl StepperConfig {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(DynamicsError::BadDt(self.dt));
        }
        if self.output_every == 0 {
            return Err(DynamicsError::BadCadence);
        }
        Ok(())
    }
}

/// u_hat from omega_hat through the stream function:
/// u1_hat = i k2 omega_hat / |k|^2, u2_hat = -i k1 omega_hat / |k|^2,
/// with u_hat(0,0) = 0. The divergence i k1 u1 + i k2 u2 cancels
/// coefficientwise.
pub fn velocity_from_vorticity(state: &State) -> (Spectrum, Spectrum) {
    let g = state.grid();
    let (n1, k1t, k2t) = (g.n1(), g.k1_table(), g.k2_table());
    let inv = g.inv_ksq();
    let mut u1 = g.zero_spectrum();
    let mut u2 = g.zero_spectrum();
    for (i, w) in state.omega_hat.coeffs().iter().enumerate() {
        let (k1, k2) = (k1t[i % n1], k2t[i / n1]);
        let s = inv[i];
        u1.coeffs_mut()[i] = Complex64::new(-k2 * s * w.im, k2 * s * w.re);
        u2.coeffs_mut()[i] = Complex64::new(k1 * s * w.im, -k1 * s * w.re);
    }
    (u1, u2)
}

/// Scratch buffers for the stepper; one per sequential time integration.
struct Workspace {
    grid: Arc<Grid>,
    // pair-transform staging
    buf_uu: Vec<Complex64>,
    buf_ww: Vec<Complex64>,
    buf_tt: Vec<Complex64>,
    tmp: Vec<Complex64>,
    scratch: Vec<Complex64>,
    // per-step maximum velocity components, for the CFL number
    max_u1: f64,
    max_u2: f64,
}

impl Workspace {
    fn new(grid: &Arc<Grid>) -> Self {
        let n = grid.len();
        let zero = Complex64::new(0.0, 0.0);
        Self {
            grid: Arc::clone(grid),
            buf_uu: vec![zero; n],
            buf_ww: vec![zero; n],
            buf_tt: vec![zero; n],
            tmp: vec![zero; n],
            scratch: vec![zero; grid.scratch_len()],
            max_u1: 0.0,
            max_u2: 0.0,
        }
    }

    /// Explicit right-hand side (everything except the horizontal
    /// dissipation): d omega = -dealias(u.grad omega) + d1 theta,
    /// d theta = -dealias(u.grad theta) - u2. Writes into `out_om`/`out_th`.
    fn rhs(
        &mut self,
        omega: &[Complex64],
        theta: &[Complex64],
        params: &PhysParams,
        out_om: &mut [Complex64],
        out_th: &mut [Complex64],
    ) {
        let g = Arc::clone(&self.grid);
        let (n1, k1t, k2t) = (g.n1(), g.k1_table(), g.k2_table());
        let inv = g.inv_ksq();

        // Pack three transform pairs sharing the factor z = k1 + i k2:
        //   uu = (u1 + i u2)_hat      = inv_ksq * z * omega_hat
        //   ww = (d1 om + i d2 om)hat = i * z * omega_hat
        //   tt = (d1 th + i d2 th)hat = i * z * theta_hat
        for i in 0..omega.len() {
            let (k1, k2) = (k1t[i % n1], k2t[i / n1]);
            let (w, th) = (omega[i], theta[i]);
            let zw = Complex64::new(k1 * w.re - k2 * w.im, k1 * w.im + k2 * w.re);
            let zt = Complex64::new(k1 * th.re - k2 * th.im, k1 * th.im + k2 * th.re);
            self.buf_uu[i] = Complex64::new(inv[i] * zw.re, inv[i] * zw.im);
            self.buf_ww[i] = Complex64::new(-zw.im, zw.re);
            self.buf_tt[i] = Complex64::new(-zt.im, zt.re);
        }
        g.fft2(&mut self.buf_uu, &mut self.tmp, &mut self.scratch, false);
        g.fft2(&mut self.buf_ww, &mut self.tmp, &mut self.scratch, false);
        g.fft2(&mut self.buf_tt, &mut self.tmp, &mut self.scratch, false);

        // physical space: uu = u1 + i u2, ww = grad omega, tt = grad theta;
        // form u.grad omega (re) and u.grad theta (im) in buf_ww.
        let mut m1 = 0.0f64;
        let mut m2 = 0.0f64;
        for i in 0..self.buf_uu.len() {
            let (u1, u2) = (self.buf_uu[i].re, self.buf_uu[i].im);
            m1 = m1.max(u1.abs());
            m2 = m2.max(u2.abs());
            let adv_om = u1 * self.buf_ww[i].re + u2 * self.buf_ww[i].im;
            let adv_th = u1 * self.buf_tt[i].re + u2 * self.buf_tt[i].im;
            self.buf_ww[i] = Complex64::new(adv_om, adv_th);
        }
        self.max_u1 = self.max_u1.max(m1);
        self.max_u2 = self.max_u2.max(m2);

        g.fft2(&mut self.buf_ww, &mut self.tmp, &mut self.scratch, true);
        let norm = 1.0 / g.len() as f64;
        for c in &mut self.buf_ww {
            *c *= norm;
        }
        unmix_pair(&g, &self.buf_ww, out_om, out_th);

        // dealias the products, add the buoyancy pair, and pin the mean:
        // the (0,0) right-hand side is exactly zero, so both means are
        // conserved to the bit.
        let mask = g.dealias_mask();
        let couple = if params.buoyancy_coupling { 1.0 } else { 0.0 };
        for i in 0..out_om.len() {
            let k1 = k1t[i % n1];
            let (a, b) = if mask[i] {
                (out_om[i], out_th[i])
            } else {
                (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0))
            };
            let th = theta[i];
            let w = omega[i];
            // d1 theta = i k1 theta_hat; -u2 = i k1 omega_hat / |k|^2
            out_om[i] = Complex64::new(-a.re - couple * k1 * th.im, -a.im + couple * k1 * th.re);
            let s = inv[i] * k1;
            out_th[i] = Complex64::new(-b.re - couple * s * w.im, -b.im + couple * s * w.re);
        }
        out_om[0] = Complex64::new(0.0, 0.0);
        out_th[0] = Complex64::new(0.0, 0.0);
    }
}

/// The explicit right-hand side as a standalone call (allocates scratch;
/// the run loop uses a persistent stepper instead).
pub fn nonlinear_rhs(
    state: &State,
    params: &PhysParams,
) -> Result<(Spectrum, Spectrum), DynamicsError> {
    params.validate()?;
    let g = state.grid();
    let mut ws = Workspace::new(g);
    let mut dom = g.zero_spectrum();
    let mut dth = g.zero_spectrum();
    ws.rhs(
        state.omega_hat.coeffs(),
        state.theta_hat.coeffs(),
        params,
        dom.coeffs_mut(),
        dth.coeffs_mut(),
    );
    Ok((dom, dth))
}

/// Integrating-factor RK3 stepper with preallocated buffers. With the
/// nonlinear terms switched off the horizontal heat decay is exact:
/// one step multiplies each coefficient by exp(-nu k1^2 dt).
pub struct Stepper {
    grid: Arc<Grid>,
    params: PhysParams,
    dt: f64,
    // integrating-factor tables over i1: half step and full step, per field
    eh_om: Vec<f64>,
    e1_om: Vec<f64>,
    eh_th: Vec<f64>,
    e1_th: Vec<f64>,
    ws: Workspace,
    k1_om: Vec<Complex64>,
    k1_th: Vec<Complex64>,
    k2_om: Vec<Complex64>,
    k2_th: Vec<Complex64>,
    k3_om: Vec<Complex64>,
    k3_th: Vec<Complex64>,
    s_om: Vec<Complex64>,
    s_th: Vec<Complex64>,
}

impl Stepper {
    pub fn new(grid: &Arc<Grid>, params: PhysParams, dt: f64) -> Result<Self, DynamicsError> {
        params.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(DynamicsError::BadDt(dt));
        }
        let table = |coef: f64, factor: f64| -> Vec<f64> {
            grid.k1_table()
                .iter()
                .map(|k1| (-coef * k1 * k1 * dt * factor).exp())
                .collect()
        };
        let n = grid.len();
        let zero = Complex64::new(0.0, 0.0);
        Ok(Self {
            grid: Arc::clone(grid),
            params,
            dt,
            eh_om: table(params.nu, 0.5),
            e1_om: table(params.nu, 1.0),
            eh_th: table(params.kappa, 0.5),
            e1_th: table(params.kappa, 1.0),
            ws: Workspace::new(grid),
            k1_om: vec![zero; n],
            k1_th: vec![zero; n],
            k2_om: vec![zero; n],
            k2_th: vec![zero; n],
            k3_om: vec![zero; n],
            k3_th: vec![zero; n],
            s_om: vec![zero; n],
            s_th: vec![zero; n],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// CFL number dt * max(max|u1|/dx1, max|u2|/dx2) observed over the
    /// stage evaluations since the last reset.
    pub fn cfl_number(&self) -> f64 {
        let dx1 = 1.0 / self.grid.n1() as f64;
        let dx2 = 2.0 * self.grid.half_width() / self.grid.n2() as f64;
        self.dt * (self.ws.max_u1 / dx1).max(self.ws.max_u2 / dx2)
    }

    pub fn reset_cfl(&mut self) {
        self.ws.max_u1 = 0.0;
        self.ws.max_u2 = 0.0;
    }

    /// Advance one time step in place.
    pub fn step(&mut self, state: &mut State) {
        let n1 = self.grid.n1();
        let dt = self.dt;
        let om = state.omega_hat.coeffs_mut();
        let th = state.theta_hat.coeffs_mut();

        // k1 = N(y)
        self.ws
            .rhs(om, th, &self.params, &mut self.k1_om, &mut self.k1_th);

        // stage 2: s = Eh (y + dt/2 k1)
        for i in 0..om.len() {
            let (ao, at) = (self.eh_om[i % n1], self.eh_th[i % n1]);
            self.s_om[i] = (om[i] + self.k1_om[i] * (dt / 2.0)) * ao;
            self.s_th[i] = (th[i] + self.k1_th[i] * (dt / 2.0)) * at;
        }
        self.ws.rhs(
            &self.s_om,
            &self.s_th,
            &self.params,
            &mut self.k2_om,
            &mut self.k2_th,
        );

        // stage 3: s = E1 y - dt E1 k1 + 2 dt Eh k2
        for i in 0..om.len() {
            let (eo, et) = (self.e1_om[i % n1], self.e1_th[i % n1]);
            let (ho, ht) = (self.eh_om[i % n1], self.eh_th[i % n1]);
            self.s_om[i] = om[i] * eo - self.k1_om[i] * (dt * eo) + self.k2_om[i] * (2.0 * dt * ho);
            self.s_th[i] = th[i] * et - self.k1_th[i] * (dt * et) + self.k2_th[i] * (2.0 * dt * ht);
        }
        self.ws.rhs(
            &self.s_om,
            &self.s_th,
            &self.params,
            &mut self.k3_om,
            &mut self.k3_th,
        );

        // y' = E1 y + dt/6 (E1 k1 + 4 Eh k2 + k3)
        for i in 0..om.len() {
            let (eo, et) = (self.e1_om[i % n1], self.e1_th[i % n1]);
            let (ho, ht) = (self.eh_om[i % n1], self.eh_th[i % n1]);
            om[i] = om[i] * eo
                + (self.k1_om[i] * eo + self.k2_om[i] * (4.0 * ho) + self.k3_om[i]) * (dt / 6.0);
            th[i] = th[i] * et
                + (self.k1_th[i] * et + self.k2_th[i] * (4.0 * ht) + self.k3_th[i]) * (dt / 6.0);
        }
        state.t += dt;
    }
}

/// Advance a copy of `state` by one step (test/diagnostic convenience).
pub fn step(
    state: &State,
    params: &PhysParams,
    cfg: &StepperConfig,
) -> Result<State, DynamicsError> {
    cfg.validate()?;
    let mut stepper = Stepper::new(state.grid(), *params, cfg.dt)?;
    let mut out = state.clone();
    stepper.step(&mut out);
    if !out.is_finite() {
        return Err(DynamicsError::NonFinite { step: 1, t: out.t });
    }
    Ok(out)
}

/// Knobs for a full run beyond the bare stepper.
#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub horizon: f64,
    /// Initial data is vertically localized, so the wall-tail monitor is
    /// meaningful; periodic-in-x2 data (single modes) switch it off.
    pub localized_ic: bool,
    /// Emit a snapshot every this many steps; 0 disables.
    pub snapshot_every: usize,
}

/// Everything a run produces besides artifacts written by the caller's
/// snapshot sink.
#[derive(Debug)]
pub struct RunOutcome {
    pub records: Vec<DiagnosticsRecord>,
    /// Union of all flags raised at any record.
    pub flags: Vec<String>,
    /// Set when a norm exceeded 1e6 x its initial size and the run aborted.
    pub blow_up: Option<BlowUp>,
    pub final_state: State,
    /// sqrt(||u0||_H2^2 + ||theta0||_H2^2), logged against the smallness
    /// condition of the input data.
    pub initial_h2: f64,
    /// Relative residual of the L2 energy balance
    /// [||u||^2 + ||theta||^2](t) - initial + 2 nu int ||d1 u||^2
    /// + 2 kappa int ||d1 theta||^2 = 0, trapezoid-accumulated at step
    /// resolution (reported, not flagged: it converges at the scheme's
    /// order, it is not an invariant of the discretization).
    pub l2_balance_residual: f64,
}

#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct BlowUp {
    pub t: f64,
    pub step: usize,
    pub norm: f64,
    pub threshold: f64,
}

struct NormSnapshot {
    l2_u: f64,
    l2_th: f64,
    h1_u: f64,
    h1_th: f64,
    h2_u: f64,
    h2_th: f64,
    h1_osc: f64,
}

fn norms_of(state: &State) -> Result<NormSnapshot, NormError> {
    let om = &state.omega_hat;
    let th = &state.theta_hat;
    let om_osc = crate::decomposition::oscillation_spectrum(om);
    let th_osc = crate::decomposition::oscillation_spectrum(th);
    let h1_osc = (velocity_sobolev_norm(&om_osc, 1.0)?.powi(2)
        + sobolev_norm_spectrum(&th_osc, 1.0)?.powi(2))
    .sqrt();
    Ok(NormSnapshot {
        l2_u: velocity_sobolev_norm(om, 0.0)?,
        l2_th: l2_norm_spectrum(th),
        h1_u: velocity_sobolev_norm(om, 1.0)?,
        h1_th: sobolev_norm_spectrum(th, 1.0)?,
        h2_u: velocity_sobolev_norm(om, 2.0)?,
        h2_th: sobolev_norm_spectrum(th, 2.0)?,
        h1_osc,
    })
}

/// One fused pass over both spectra: squared H2 sizes (for the running
/// supremum of E) and the four horizontal-dissipation integrands, at every
/// step so the time quadrature works at dt resolution rather than output
/// resolution.
struct StepIntegrands {
    l2u_sq: f64,
    l2th_sq: f64,
    h2u_sq: f64,
    h2th_sq: f64,
    d1u_h2_sq: f64,
    d1th_h2_sq: f64,
    d1u_l2_sq: f64,
    d1th_l2_sq: f64,
}

fn step_integrands(state: &State) -> StepIntegrands {
    let g = state.grid();
    let (n1, k1t, k2t) = (g.n1(), g.k1_table(), g.k2_table());
    let inv = g.inv_ksq();
    let two_l = 2.0 * g.half_width();
    let mut out = StepIntegrands {
        l2u_sq: 0.0,
        l2th_sq: 0.0,
        h2u_sq: 0.0,
        h2th_sq: 0.0,
        d1u_h2_sq: 0.0,
        d1th_h2_sq: 0.0,
        d1u_l2_sq: 0.0,
        d1th_l2_sq: 0.0,
    };
    let om = state.omega_hat.coeffs();
    let th = state.theta_hat.coeffs();
    for i in 0..om.len() {
        let (k1, k2) = (k1t[i % n1], k2t[i / n1]);
        let ksq = k1 * k1 + k2 * k2;
        let sob2 = (1.0 + ksq) * (1.0 + ksq);
        let eo = om[i].norm_sqr();
        let et = th[i].norm_sqr();
        // |u|^2 per mode = |omega|^2 / |k|^2
        let eu = eo * inv[i];
        out.l2u_sq += eu;
        out.l2th_sq += et;
        out.h2u_sq += sob2 * eu;
        out.h2th_sq += sob2 * et;
        out.d1u_h2_sq += k1 * k1 * sob2 * eu;
        out.d1th_h2_sq += k1 * k1 * sob2 * et;
        out.d1u_l2_sq += k1 * k1 * eu;
        out.d1th_l2_sq += k1 * k1 * et;
    }
    out.l2u_sq *= two_l;
    out.l2th_sq *= two_l;
    out.h2u_sq *= two_l;
    out.h2th_sq *= two_l;
    out.d1u_h2_sq *= two_l;
    out.d1th_h2_sq *= two_l;
    out.d1u_l2_sq *= two_l;
    out.d1th_l2_sq *= two_l;
    out
}

/// Spectral divergence of the velocity recovered from omega_hat, computed
/// the long way round (both multiplier paths) so cancellation is measured,
/// not assumed.
fn spectral_divergence_max(omega_hat: &Spectrum) -> f64 {
    let g = omega_hat.grid();
    let (n1, k1t, k2t) = (g.n1(), g.k1_table(), g.k2_table());
    let inv = g.inv_ksq();
    let mut worst = 0.0f64;
    for (i, w) in omega_hat.coeffs().iter().enumerate() {
        let (k1, k2) = (k1t[i % n1], k2t[i / n1]);
        let s = inv[i];
        // i k1 u1 + i k2 u2 with u1 = i k2 s w, u2 = -i k1 s w
        let re = -k1 * (k2 * s * w.re) + k2 * (k1 * s * w.re);
        let im = -k1 * (k2 * s * w.im) + k2 * (k1 * s * w.im);
        worst = worst.max(re.abs().max(im.abs()));
    }
    worst
}

/// Largest wall-zone amplitude across `fields`, relative to their common
/// peak. The shared normalization matters: a component that has decayed to
/// round-off (u2 once the oscillation dies) is all noise, and against its
/// own vanished peak that noise would read as an O(1) tail.
fn tail_fraction(fields: &[&Field], cut: f64) -> f64 {
    let mut tail = 0.0f64;
    let mut peak = 0.0f64;
    for field in fields {
        let g = field.grid();
        let n1 = g.n1();
        for (i2, &x2) in g.x2_nodes().iter().enumerate() {
            let row = &field.values()[i2 * n1..(i2 + 1) * n1];
            let m = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            peak = peak.max(m);
            if x2.abs() > cut {
                tail = tail.max(m);
            }
        }
    }
    if peak == 0.0 {
        0.0
    } else {
        tail / peak
    }
}

/// Integrate from `initial` to `opts.horizon`, emitting a diagnostics
/// record every `cfg.output_every` steps (plus t = 0 and the final step)
/// and invoking `snapshot_sink(step, state)` on the snapshot cadence.
/// Invariant violations are flagged on the records; a blow-up aborts early
/// with the partial trajectory.
pub fn run(
    initial: State,
    params: &PhysParams,
    cfg: &StepperConfig,
    opts: &RunOptions,
    mut snapshot_sink: impl FnMut(usize, &State) -> Result<(), String>,
) -> Result<RunOutcome, DynamicsError> {
    params.validate()?;
    cfg.validate()?;
    if !(opts.horizon.is_finite() && opts.horizon > 0.0) {
        return Err(DynamicsError::BadHorizon(opts.horizon));
    }
    if !initial.is_finite() {
        return Err(DynamicsError::NonFinite {
            step: 0,
            t: initial.t,
        });
    }
    let grid = Arc::clone(initial.grid());
    let mut state = initial;
    let mut stepper = Stepper::new(&grid, *params, cfg.dt)?;
    let total_steps = (opts.horizon / cfg.dt).round().max(1.0) as usize;

    let n0 = norms_of(&state)?;
    let initial_h2 = (n0.h2_u.powi(2) + n0.h2_th.powi(2)).sqrt();
    let initial_l2_sq = n0.l2_u.powi(2) + n0.l2_th.powi(2);
    // blow-up thresholds: 1e6 x the initial size of each monitored norm,
    // with an absolute floor so zero data still has a finite threshold.
    let thresholds: Vec<f64> = [n0.l2_u, n0.l2_th, n0.h2_u, n0.h2_th]
        .iter()
        .map(|v| 1e6 * v.max(1e-6))
        .collect();

    let mut records: Vec<DiagnosticsRecord> = Vec::new();
    let mut all_flags: Vec<String> = Vec::new();
    let mut blow_up = None;

    // Dissipation integrals and the running H2 supremum advance every step
    // (trapezoid at dt resolution), independent of the output cadence.
    let mut prev_g = step_integrands(&state);
    let mut sup_h2_sq = prev_g.h2u_sq + prev_g.h2th_sq;
    let mut diss_u = 0.0f64;
    let mut diss_th = 0.0f64;
    let mut diss_u_l2 = 0.0f64;
    let mut diss_th_l2 = 0.0f64;
    let mut l2_balance_residual = 0.0f64;

    let emit = |state: &State,
                    step: usize,
                    cfl: f64,
                    sup_h2_sq: f64,
                    diss_u: f64,
                    diss_th: f64,
                    records: &mut Vec<DiagnosticsRecord>,
                    all_flags: &mut Vec<String>|
     -> Result<(f64, f64), DynamicsError> {
        let ns = norms_of(state)?;
        let energy = sup_h2_sq + diss_u + diss_th;

        // physical-space checks need u and theta samples
        let (u1_hat, u2_hat) = velocity_from_vorticity(state);
        let (u1, u2) = grid.inverse_pair(&u1_hat, &u2_hat)?;
        let (theta, reality) = grid.inverse_with_residue(&state.theta_hat)?;
        let bar_u2_max = crate::decomposition::horizontal_average(&u2).max_abs();
        let div_max = spectral_divergence_max(&state.omega_hat);
        let cut = 0.9 * grid.half_width();
        let tail_mass = if opts.localized_ic {
            tail_fraction(&[&theta, &u1, &u2], cut)
        } else {
            0.0
        };

        let mut flags: Vec<String> = Vec::new();
        if div_max > 1e-12 {
            flags.push("div_free".into());
        }
        if bar_u2_max > 1e-12 {
            flags.push("bar_u2".into());
        }
        if reality > 1e-13 || state.omega_hat.hermitian_residue() > 1e-13 {
            flags.push("hermitian".into());
        }
        if cfl > 0.5 {
            flags.push("cfl_exceeded".into());
        }
        if opts.localized_ic && tail_mass > 1e-8 {
            flags.push("tail_mass".into());
        }

        for f in &flags {
            if !all_flags.contains(f) {
                all_flags.push(f.clone());
            }
        }
        records.push(DiagnosticsRecord {
            t: state.t,
            step,
            energy,
            l2_u: ns.l2_u,
            l2_theta: ns.l2_th,
            h1_u: ns.h1_u,
            h1_theta: ns.h1_th,
            h2_u: ns.h2_u,
            h2_theta: ns.h2_th,
            h1_osc: ns.h1_osc,
            diss_u_cum: diss_u,
            diss_theta_cum: diss_th,
            bar_u2_max,
            div_max,
            tail_mass,
            cfl,
            flags,
        });
        let blow_norms = [ns.l2_u, ns.l2_th, ns.h2_u, ns.h2_th];
        let mut worst: Option<(f64, f64)> = None;
        for (v, th) in blow_norms.iter().zip(&thresholds) {
            if v > th {
                worst = Some((*v, *th));
            }
        }
        Ok(worst.unwrap_or((0.0, f64::INFINITY)))
    };

    emit(
        &state,
        0,
        0.0,
        sup_h2_sq,
        diss_u,
        diss_th,
        &mut records,
        &mut all_flags,
    )?;

    for step in 1..=total_steps {
        stepper.step(&mut state);
        if !state.is_finite() {
            if !all_flags.iter().any(|f| f == "non_finite") {
                all_flags.push("non_finite".into());
            }
            return Err(DynamicsError::NonFinite { step, t: state.t });
        }

        let g = step_integrands(&state);
        diss_u += 0.5 * (prev_g.d1u_h2_sq + g.d1u_h2_sq) * cfg.dt * params.nu;
        diss_th += 0.5 * (prev_g.d1th_h2_sq + g.d1th_h2_sq) * cfg.dt * params.kappa;
        diss_u_l2 += 0.5 * (prev_g.d1u_l2_sq + g.d1u_l2_sq) * cfg.dt * params.nu;
        diss_th_l2 += 0.5 * (prev_g.d1th_l2_sq + g.d1th_l2_sq) * cfg.dt * params.kappa;
        sup_h2_sq = sup_h2_sq.max(g.h2u_sq + g.h2th_sq);
        // incompressibility is checked at every step, not just on the output
        // cadence; the bar part of u2 is zero identically (u2_hat carries a
        // k1 factor), so the divergence residual is the live invariant
        if spectral_divergence_max(&state.omega_hat) > 1e-12
            && !all_flags.iter().any(|f| f == "div_free")
        {
            all_flags.push("div_free".into());
        }
        // L2 balance bookkeeping (reported on the outcome, not flagged)
        if initial_l2_sq > 0.0 {
            let res = (g.l2u_sq + g.l2th_sq - initial_l2_sq + 2.0 * (diss_u_l2 + diss_th_l2))
                .abs()
                / initial_l2_sq;
            l2_balance_residual = l2_balance_residual.max(res);
        }
        prev_g = g;

        if opts.snapshot_every > 0 && step % opts.snapshot_every == 0 {
            snapshot_sink(step, &state).map_err(DynamicsError::Sink)?;
        }
        if step % cfg.output_every == 0 || step == total_steps {
            let cfl = stepper.cfl_number();
            stepper.reset_cfl();
            let (norm, threshold) = emit(
                &state,
                step,
                cfl,
                sup_h2_sq,
                diss_u,
                diss_th,
                &mut records,
                &mut all_flags,
            )?;
            if norm > threshold {
                blow_up = Some(BlowUp {
                    t: state.t,
                    step,
                    norm,
                    threshold,
                });
                if !all_flags.iter().any(|f| f == "blow_up") {
                    all_flags.push("blow_up".into());
                }
                break;
            }
        }
    }

    Ok(RunOutcome {
        records,
        flags: all_flags,
        blow_up,
        final_state: state,
        initial_h2,
        l2_balance_residual,
    })
}

/// Which component of the averaged/oscillation system to residual-check.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemPart {
    /// Horizontal averages: dt theta_bar + avg(u . grad theta_tilde) = 0 and
    /// dt u1_bar + avg(u . grad u1_tilde) = 0.
    Bar,
    /// Oscillation: dt theta_tilde + osc(u . grad theta_tilde)
    /// + u2 d2 theta_bar + u2_tilde - kappa d11 theta_tilde = 0.
    Tilde,
}

#[derive(Debug, Clone)]
pub struct AveragedResidual {
    pub part: SystemPart,
    /// Worst L2 residual of the temperature equation over interior states.
    pub theta_residual: f64,
    /// Worst L2 residual of the averaged horizontal-velocity equation
    /// (bar system only).
    pub u1_residual: Option<f64>,
    pub dt: f64,
    pub interior_states: usize,
}

/// Check the 1D averaged system or the oscillation temperature equation on
/// a window of >= 3 consecutive stored states (uniform spacing), using
/// centered differences for the time derivative; the residual is
/// O(dt^2) + O(spectral truncation).
pub fn averaged_system_residual(
    window: &[State],
    params: &PhysParams,
    part: SystemPart,
) -> Result<AveragedResidual, DynamicsError> {
    if window.len() < 3 {
        return Err(DynamicsError::WindowTooShort(window.len()));
    }
    let dt = window[1].t - window[0].t;
    for pair in window.windows(2) {
        let d = pair[1].t - pair[0].t;
        if (d - dt).abs() > 1e-12 * dt.abs().max(1.0) {
            return Err(DynamicsError::UnevenWindow(dt, d));
        }
    }
    let g = Arc::clone(window[0].grid());
    let area = g.cell_area();
    let dx2 = 2.0 * g.half_width() / g.n2() as f64;

    let l2_field = |f: &Field| (f.values().iter().map(|v| v * v).sum::<f64>() * area).sqrt();

    let mut worst_theta = 0.0f64;
    let mut worst_u1 = 0.0f64;
    for mid in 1..window.len() - 1 {
        let (before, state, after) = (&window[mid - 1], &window[mid], &window[mid + 1]);

        // physical fields at the middle state
        let (u1_hat, u2_hat) = velocity_from_vorticity(state);
        let (u1, u2) = g.inverse_pair(&u1_hat, &u2_hat)?;
        let theta_hat = &state.theta_hat;
        let theta_tilde_hat = crate::decomposition::oscillation_spectrum(theta_hat);
        let dth1 = g.derivative(&theta_tilde_hat, crate::grid::Axis::X1, 1);
        let dth2 = g.derivative(&theta_tilde_hat, crate::grid::Axis::X2, 1);
        let (gx, gy) = g.inverse_pair(&dth1, &dth2)?;
        // u . grad theta_tilde, dealiased like the solver's advection
        let mut adv = g.zero_field();
        for i in 0..g.len() {
            adv.values_mut()[i] =
                u1.values()[i] * gx.values()[i] + u2.values()[i] * gy.values()[i];
        }
        let adv_hat = g.dealias(&g.forward(&adv)?);

        match part {
            SystemPart::Bar => {
                // dt theta_bar + avg(u . grad theta_tilde) = 0
                let th_b = crate::decomposition::profile_from_spectrum(&before.theta_hat)?;
                let th_a = crate::decomposition::profile_from_spectrum(&after.theta_hat)?;
                let avg_adv = crate::decomposition::profile_from_spectrum(&adv_hat)?;
                let mut res = vec![0.0f64; g.n2()];
                for i2 in 0..g.n2() {
                    let dtheta = (th_a.values()[i2] - th_b.values()[i2]) / (2.0 * dt);
                    res[i2] = dtheta + avg_adv.values()[i2];
                }
                let r = (res.iter().map(|v| v * v).sum::<f64>() * dx2).sqrt();
                worst_theta = worst_theta.max(r);

                // dt u1_bar + avg(u . grad u1_tilde) = 0
                let u1_bar_of = |s: &State| -> Result<crate::decomposition::Profile, GridError> {
                    let (u1h, _) = velocity_from_vorticity(s);
                    crate::decomposition::profile_from_spectrum(&u1h)
                };
                let ub = u1_bar_of(before)?;
                let ua = u1_bar_of(after)?;
                let u1_tilde_hat = crate::decomposition::oscillation_spectrum(&u1_hat);
                let du1 = g.derivative(&u1_tilde_hat, crate::grid::Axis::X1, 1);
                let du2 = g.derivative(&u1_tilde_hat, crate::grid::Axis::X2, 1);
                let (hx, hy) = g.inverse_pair(&du1, &du2)?;
                let mut adv_u = g.zero_field();
                for i in 0..g.len() {
                    adv_u.values_mut()[i] =
                        u1.values()[i] * hx.values()[i] + u2.values()[i] * hy.values()[i];
                }
                let avg_adv_u =
                    crate::decomposition::profile_from_spectrum(&g.dealias(&g.forward(&adv_u)?))?;
                let mut res_u = vec![0.0f64; g.n2()];
                for i2 in 0..g.n2() {
                    let dval = (ua.values()[i2] - ub.values()[i2]) / (2.0 * dt);
                    res_u[i2] = dval + avg_adv_u.values()[i2];
                }
                let ru = (res_u.iter().map(|v| v * v).sum::<f64>() * dx2).sqrt();
                worst_u1 = worst_u1.max(ru);
            }
            SystemPart::Tilde => {
                // dt theta_tilde + osc(u . grad theta_tilde) + u2 d2 theta_bar
                //   + u2_tilde - kappa d11 theta_tilde = 0
                let tt_b = crate::decomposition::oscillation_spectrum(&before.theta_hat);
                let tt_a = crate::decomposition::oscillation_spectrum(&after.theta_hat);
                let mut dtheta = tt_a.clone();
                dtheta.add_scaled(&tt_b, -1.0);
                dtheta.scale(1.0 / (2.0 * dt));

                let osc_adv = crate::decomposition::oscillation_spectrum(&adv_hat);
                let theta_bar_hat = crate::decomposition::bar_spectrum(theta_hat);
                let d2_bar = g.derivative(&theta_bar_hat, crate::grid::Axis::X2, 1);
                let d2_bar_field = g.inverse(&d2_bar)?;
                let mut u2_d2bar = g.zero_field();
                for i in 0..g.len() {
                    u2_d2bar.values_mut()[i] = u2.values()[i] * d2_bar_field.values()[i];
                }
                let u2_d2bar_hat = g.dealias(&g.forward(&u2_d2bar)?);
                let u2_tilde_hat = crate::decomposition::oscillation_spectrum(&u2_hat);
                let diff = g.derivative(&theta_tilde_hat, crate::grid::Axis::X1, 2);

                let mut res = dtheta;
                res.add_scaled(&osc_adv, 1.0);
                res.add_scaled(&u2_d2bar_hat, 1.0);
                res.add_scaled(&u2_tilde_hat, 1.0);
                res.add_scaled(&diff, -params.kappa);
                let r = l2_field(&g.inverse(&res)?);
                worst_theta = worst_theta.max(r);
            }
        }
    }

    Ok(AveragedResidual {
        part,
        theta_residual: worst_theta,
        u1_residual: if part == SystemPart::Bar {
            Some(worst_u1)
        } else {
            None
        },
        dt,
        interior_states: window.len() - 2,
    })
}
