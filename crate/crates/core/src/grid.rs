//! Spectral grid for the periodic channel T x [-L, L]: complex 2D FFTs,
//! spectral derivatives, the 2/3-rule dealias mask, and the streamfunction
//! solve.
//!
//! Conventions, fixed once here and relied on everywhere else:
//! - samples are row-major with x2 outer: `values[i2 * n1 + i1]`;
//! - the forward transform divides by n1*n2, so `coeff(0,0)` is the domain
//!   mean and Parseval reads `integral(f^2) = 2L * sum |f_hat|^2`;
//! - wavenumbers are k1 = 2*pi*m1 (period 1) and k2 = pi*m2/L (period 2L)
//!   with m in [-n/2, n/2) in standard FFT storage order.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid size n{axis} = {n} must be even and at least 8")]
    BadSize { axis: u8, n: usize },
    #[error("half_width must be positive and finite, got {0}")]
    BadHalfWidth(f64),
    #[error("dealias_fraction must lie in (0, 1], got {0}")]
    BadDealiasFraction(f64),
    #[error("input contains a non-finite value at flat index {0}")]
    NonFinite(usize),
    #[error("fields live on different grids")]
    GridMismatch,
}

/// Discretization parameters for T x [-L, L].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    /// Sample count across the periodic x1 box [0, 1).
    pub n1: usize,
    /// Sample count across the periodic vertical interval [-L, L).
    pub n2: usize,
    /// L, half the vertical extent.
    pub half_width: f64,
    /// Fraction of modes kept per axis when dealiasing products.
    pub dealias_fraction: f64,
}

impl GridSpec {
    pub fn new(n1: usize, n2: usize, half_width: f64) -> Self {
        Self {
            n1,
            n2,
            half_width,
            dealias_fraction: 2.0 / 3.0,
        }
    }

    pub fn with_dealias_fraction(mut self, fraction: f64) -> Self {
        self.dealias_fraction = fraction;
        self
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if self.n1 % 2 != 0 || self.n1 < 8 {
            return Err(GridError::BadSize {
                axis: 1,
                n: self.n1,
            });
        }
        if self.n2 % 2 != 0 || self.n2 < 8 {
            return Err(GridError::BadSize {
                axis: 2,
                n: self.n2,
            });
        }
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return Err(GridError::BadHalfWidth(self.half_width));
        }
        if !(self.dealias_fraction > 0.0 && self.dealias_fraction <= 1.0) {
            return Err(GridError::BadDealiasFraction(self.dealias_fraction));
        }
        Ok(())
    }
}

/// The coordinate axes; x1 is horizontal (periodic unit box), x2 vertical.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum Axis {
    X1,
    X2,
}

pub struct Grid {
    spec: GridSpec,
    x1: Vec<f64>,
    x2: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
    /// 1/(k1^2 + k2^2) per cell, zero at the (0,0) mode.
    inv_ksq: Vec<f64>,
    mask: Vec<bool>,
    m1_cut: i64,
    m2_cut: i64,
    fft1_f: Arc<dyn Fft<f64>>,
    fft1_i: Arc<dyn Fft<f64>>,
    fft2_f: Arc<dyn Fft<f64>>,
    fft2_i: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid").field("spec", &self.spec).finish()
    }
}

/// Signed mode number for storage index i on an axis of n points:
/// 0, 1, ..., n/2-1, -n/2, ..., -1.
#[inline]
fn signed_mode(i: usize, n: usize) -> i64 {
    if i < n / 2 {
        i as i64
    } else {
        i as i64 - n as i64
    }
}

impl Grid {
    pub fn new(spec: GridSpec) -> Result<Arc<Self>, GridError> {
        spec.validate()?;
        let (n1, n2, l) = (spec.n1, spec.n2, spec.half_width);
        let x1: Vec<f64> = (0..n1).map(|i| i as f64 / n1 as f64).collect();
        let x2: Vec<f64> = (0..n2)
            .map(|i| -l + i as f64 * (2.0 * l / n2 as f64))
            .collect();
        let k1: Vec<f64> = (0..n1)
            .map(|i| 2.0 * std::f64::consts::PI * signed_mode(i, n1) as f64)
            .collect();
        let k2: Vec<f64> = (0..n2)
            .map(|i| std::f64::consts::PI * signed_mode(i, n2) as f64 / l)
            .collect();

        // Integer cutoffs for the dealias mask. The guard factor absorbs
        // cases like 2/3 * 6 = 3.9999999999999996, which must classify as 4.
        let cut = |n: usize| -> i64 {
            (spec.dealias_fraction * (n / 2) as f64 * (1.0 + 1e-12)).floor() as i64
        };
        let (m1_cut, m2_cut) = (cut(n1), cut(n2));
        let mut mask = vec![false; n1 * n2];
        for i2 in 0..n2 {
            let m2 = signed_mode(i2, n2).abs();
            for i1 in 0..n1 {
                let m1 = signed_mode(i1, n1).abs();
                mask[i2 * n1 + i1] = m1 <= m1_cut && m2 <= m2_cut;
            }
        }

        let mut inv_ksq = vec![0.0; n1 * n2];
        for i2 in 0..n2 {
            for i1 in 0..n1 {
                let ksq = k1[i1] * k1[i1] + k2[i2] * k2[i2];
                if ksq > 0.0 {
                    inv_ksq[i2 * n1 + i1] = 1.0 / ksq;
                }
            }
        }

        let mut planner = FftPlanner::new();
        let fft1_f = planner.plan_fft_forward(n1);
        let fft1_i = planner.plan_fft_inverse(n1);
        let fft2_f = planner.plan_fft_forward(n2);
        let fft2_i = planner.plan_fft_inverse(n2);
        let scratch_len = fft1_f
            .get_inplace_scratch_len()
            .max(fft1_i.get_inplace_scratch_len())
            .max(fft2_f.get_inplace_scratch_len())
            .max(fft2_i.get_inplace_scratch_len());

        Ok(Arc::new(Self {
            spec,
            x1,
            x2,
            k1,
            k2,
            inv_ksq,
            mask,
            m1_cut,
            m2_cut,
            fft1_f,
            fft1_i,
            fft2_f,
            fft2_i,
            scratch_len,
        }))
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn n1(&self) -> usize {
        self.spec.n1
    }

    pub fn n2(&self) -> usize {
        self.spec.n2
    }

    pub fn half_width(&self) -> f64 {
        self.spec.half_width
    }

    pub fn len(&self) -> usize {
        self.spec.n1 * self.spec.n2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x1_nodes(&self) -> &[f64] {
        &self.x1
    }

    pub fn x2_nodes(&self) -> &[f64] {
        &self.x2
    }

    pub fn k1_table(&self) -> &[f64] {
        &self.k1
    }

    pub fn k2_table(&self) -> &[f64] {
        &self.k2
    }

    pub fn dealias_mask(&self) -> &[bool] {
        &self.mask
    }

    /// Largest |m1| kept by the dealias mask.
    pub fn m1_cut(&self) -> i64 {
        self.m1_cut
    }

    /// Largest |m2| kept by the dealias mask.
    pub fn m2_cut(&self) -> i64 {
        self.m2_cut
    }

    pub(crate) fn inv_ksq(&self) -> &[f64] {
        &self.inv_ksq
    }

    /// Quadrature weight of one cell: dx1 * dx2.
    pub fn cell_area(&self) -> f64 {
        (1.0 / self.spec.n1 as f64) * (2.0 * self.spec.half_width / self.spec.n2 as f64)
    }

    #[inline]
    pub fn index(&self, i2: usize, i1: usize) -> usize {
        i2 * self.spec.n1 + i1
    }

    pub fn m1_at(&self, i1: usize) -> i64 {
        signed_mode(i1, self.spec.n1)
    }

    pub fn m2_at(&self, i2: usize) -> i64 {
        signed_mode(i2, self.spec.n2)
    }

    /// Flat index of the signed mode pair (m1, m2).
    /// Panics if a mode lies outside [-n/2, n/2).
    pub fn mode_index(&self, m1: i64, m2: i64) -> usize {
        let (n1, n2) = (self.spec.n1 as i64, self.spec.n2 as i64);
        assert!(
            m1 >= -n1 / 2 && m1 < n1 / 2 && m2 >= -n2 / 2 && m2 < n2 / 2,
            "mode ({m1}, {m2}) out of range for {n1}x{n2} grid"
        );
        let i1 = m1.rem_euclid(n1) as usize;
        let i2 = m2.rem_euclid(n2) as usize;
        self.index(i2, i1)
    }

    pub fn zero_field(self: &Arc<Self>) -> Field {
        Field {
            grid: Arc::clone(self),
            values: vec![0.0; self.len()],
        }
    }

    pub fn zero_spectrum(self: &Arc<Self>) -> Spectrum {
        Spectrum {
            grid: Arc::clone(self),
            coeffs: vec![Complex64::new(0.0, 0.0); self.len()],
        }
    }

    /// Sample f(x1, x2) at the grid nodes.
    pub fn field_from_fn(self: &Arc<Self>, f: impl Fn(f64, f64) -> f64) -> Field {
        let mut values = Vec::with_capacity(self.len());
        for &x2 in &self.x2 {
            for &x1 in &self.x1 {
                values.push(f(x1, x2));
            }
        }
        Field {
            grid: Arc::clone(self),
            values,
        }
    }

    pub(crate) fn scratch_len(&self) -> usize {
        self.scratch_len
    }

    /// Unnormalized in-place 2D FFT. `tmp` and `buf` are n1*n2 long,
    /// `scratch` at least `scratch_len()`.
    pub(crate) fn fft2(
        &self,
        buf: &mut [Complex64],
        tmp: &mut [Complex64],
        scratch: &mut [Complex64],
        forward: bool,
    ) {
        let (n1, n2) = (self.spec.n1, self.spec.n2);
        debug_assert_eq!(buf.len(), n1 * n2);
        debug_assert_eq!(tmp.len(), n1 * n2);
        let (fx1, fx2) = if forward {
            (&self.fft1_f, &self.fft2_f)
        } else {
            (&self.fft1_i, &self.fft2_i)
        };
        // x1 lines are contiguous rows; process handles all n2 of them.
        fx1.process_with_scratch(buf, scratch);
        transpose(buf, tmp, n1, n2);
        fx2.process_with_scratch(tmp, scratch);
        transpose(tmp, buf, n2, n1);
    }

    fn check_finite(values: &[f64]) -> Result<(), GridError> {
        match values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(GridError::NonFinite(i)),
            None => Ok(()),
        }
    }

    /// Physical samples -> coefficients (divides by n1*n2).
    pub fn forward(self: &Arc<Self>, f: &Field) -> Result<Spectrum, GridError> {
        if !Arc::ptr_eq(self, &f.grid) {
            return Err(GridError::GridMismatch);
        }
        Self::check_finite(&f.values)?;
        let mut buf: Vec<Complex64> = f.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let mut tmp = vec![Complex64::new(0.0, 0.0); self.len()];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len];
        self.fft2(&mut buf, &mut tmp, &mut scratch, true);
        let norm = 1.0 / self.len() as f64;
        for c in &mut buf {
            *c *= norm;
        }
        Ok(Spectrum {
            grid: Arc::clone(self),
            coeffs: buf,
        })
    }

    /// Coefficients -> physical samples, dropping the imaginary residue.
    pub fn inverse(self: &Arc<Self>, s: &Spectrum) -> Result<Field, GridError> {
        Ok(self.inverse_with_residue(s)?.0)
    }

    /// Like `inverse`, additionally reporting the reality defect
    /// max |Im| / max(|Re|, 1), which is ~1e-16 for Hermitian input.
    pub fn inverse_with_residue(self: &Arc<Self>, s: &Spectrum) -> Result<(Field, f64), GridError> {
        if !Arc::ptr_eq(self, &s.grid) {
            return Err(GridError::GridMismatch);
        }
        if let Some(i) = s
            .coeffs
            .iter()
            .position(|c| !(c.re.is_finite() && c.im.is_finite()))
        {
            return Err(GridError::NonFinite(i));
        }
        let mut buf = s.coeffs.clone();
        let mut tmp = vec![Complex64::new(0.0, 0.0); self.len()];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len];
        self.fft2(&mut buf, &mut tmp, &mut scratch, false);
        let mut max_re = 0.0f64;
        let mut max_im = 0.0f64;
        let values: Vec<f64> = buf
            .iter()
            .map(|c| {
                max_re = max_re.max(c.re.abs());
                max_im = max_im.max(c.im.abs());
                c.re
            })
            .collect();
        let residue = max_im / max_re.max(1.0);
        Ok((
            Field {
                grid: Arc::clone(self),
                values,
            },
            residue,
        ))
    }

    /// Transform two real fields with one complex FFT: the input a + i*b has
    /// DFT X with a_hat(k) = (X(k) + conj(X(-k)))/2 and
    /// b_hat(k) = -i*(X(k) - conj(X(-k)))/2.
    pub fn forward_pair(
        self: &Arc<Self>,
        a: &Field,
        b: &Field,
    ) -> Result<(Spectrum, Spectrum), GridError> {
        if !Arc::ptr_eq(self, &a.grid) || !Arc::ptr_eq(self, &b.grid) {
            return Err(GridError::GridMismatch);
        }
        Self::check_finite(&a.values)?;
        Self::check_finite(&b.values)?;
        let mut buf: Vec<Complex64> = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(&x, &y)| Complex64::new(x, y))
            .collect();
        let mut tmp = vec![Complex64::new(0.0, 0.0); self.len()];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len];
        self.fft2(&mut buf, &mut tmp, &mut scratch, true);
        let norm = 1.0 / self.len() as f64;
        for c in &mut buf {
            *c *= norm;
        }
        let mut sa = self.zero_spectrum();
        let mut sb = self.zero_spectrum();
        unmix_pair(self, &buf, &mut sa.coeffs, &mut sb.coeffs);
        Ok((sa, sb))
    }

    /// Invert two Hermitian spectra with one complex FFT: by linearity the
    /// inverse of a_hat + i*b_hat is a + i*b.
    pub fn inverse_pair(
        self: &Arc<Self>,
        sa: &Spectrum,
        sb: &Spectrum,
    ) -> Result<(Field, Field), GridError> {
        if !Arc::ptr_eq(self, &sa.grid) || !Arc::ptr_eq(self, &sb.grid) {
            return Err(GridError::GridMismatch);
        }
        let mut buf: Vec<Complex64> = sa
            .coeffs
            .iter()
            .zip(&sb.coeffs)
            .map(|(x, y)| Complex64::new(x.re - y.im, x.im + y.re))
            .collect();
        let mut tmp = vec![Complex64::new(0.0, 0.0); self.len()];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.scratch_len];
        self.fft2(&mut buf, &mut tmp, &mut scratch, false);
        let mut a = self.zero_field();
        let mut b = self.zero_field();
        for (i, c) in buf.iter().enumerate() {
            a.values[i] = c.re;
            b.values[i] = c.im;
        }
        Ok((a, b))
    }

    /// Multiply by (i * k_axis)^order. The i^order phase is applied as exact
    /// component swaps and sign flips; only the real factor k^order rounds.
    pub fn derivative(&self, s: &Spectrum, axis: Axis, order: u32) -> Spectrum {
        let mut out = s.clone();
        self.derivative_inplace(&mut out.coeffs, axis, order);
        out
    }

    pub(crate) fn derivative_inplace(&self, coeffs: &mut [Complex64], axis: Axis, order: u32) {
        let (n1, n2) = (self.spec.n1, self.spec.n2);
        let phase = (order % 4) as u8;
        let apply = |c: Complex64, f: f64| -> Complex64 {
            match phase {
                0 => Complex64::new(c.re * f, c.im * f),
                1 => Complex64::new(-c.im * f, c.re * f),
                2 => Complex64::new(-c.re * f, -c.im * f),
                _ => Complex64::new(c.im * f, -c.re * f),
            }
        };
        match axis {
            Axis::X1 => {
                let factors: Vec<f64> = self.k1.iter().map(|k| k.powi(order as i32)).collect();
                for i2 in 0..n2 {
                    let row = &mut coeffs[i2 * n1..(i2 + 1) * n1];
                    for (c, &f) in row.iter_mut().zip(&factors) {
                        *c = apply(*c, f);
                    }
                }
            }
            Axis::X2 => {
                for i2 in 0..n2 {
                    let f = self.k2[i2].powi(order as i32);
                    for c in &mut coeffs[i2 * n1..(i2 + 1) * n1] {
                        *c = apply(*c, f);
                    }
                }
            }
        }
    }

    /// Zero every coefficient outside the dealias mask.
    pub fn dealias(&self, s: &Spectrum) -> Spectrum {
        let mut out = s.clone();
        self.dealias_inplace(&mut out.coeffs);
        out
    }

    pub(crate) fn dealias_inplace(&self, coeffs: &mut [Complex64]) {
        for (c, &keep) in coeffs.iter_mut().zip(&self.mask) {
            if !keep {
                *c = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// psi_hat = -omega_hat / (k1^2 + k2^2), with the (0,0) mode gauged to 0.
    pub fn solve_streamfunction(&self, omega_hat: &Spectrum) -> Spectrum {
        let mut out = omega_hat.clone();
        for (c, &w) in out.coeffs.iter_mut().zip(&self.inv_ksq) {
            *c = Complex64::new(-c.re * w, -c.im * w);
        }
        out
    }
}

fn transpose(src: &[Complex64], dst: &mut [Complex64], src_cols: usize, src_rows: usize) {
    const B: usize = 32;
    for rb in (0..src_rows).step_by(B) {
        for cb in (0..src_cols).step_by(B) {
            for r in rb..(rb + B).min(src_rows) {
                for c in cb..(cb + B).min(src_cols) {
                    dst[c * src_rows + r] = src[r * src_cols + c];
                }
            }
        }
    }
}

/// Split the DFT of a + i*b into the Hermitian parts belonging to a and b.
/// `packed` must already carry the forward normalization.
pub(crate) fn unmix_pair(
    grid: &Grid,
    packed: &[Complex64],
    a_out: &mut [Complex64],
    b_out: &mut [Complex64],
) {
    let (n1, n2) = (grid.spec.n1, grid.spec.n2);
    for i2 in 0..n2 {
        let j2 = if i2 == 0 { 0 } else { n2 - i2 };
        for i1 in 0..n1 {
            let j1 = if i1 == 0 { 0 } else { n1 - i1 };
            let x = packed[i2 * n1 + i1];
            let y = packed[j2 * n1 + j1].conj();
            a_out[i2 * n1 + i1] = Complex64::new(0.5 * (x.re + y.re), 0.5 * (x.im + y.im));
            b_out[i2 * n1 + i1] = Complex64::new(0.5 * (x.im - y.im), 0.5 * (y.re - x.re));
        }
    }
}

/// A real scalar function sampled on the grid, row-major with x2 outer.
#[derive(Clone)]
pub struct Field {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl fmt::Debug for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Field")
            .field("grid", &self.grid.spec)
            .field("max_abs", &self.max_abs())
            .finish()
    }
}

impl Field {
    /// Wrap existing samples; the length must match the grid.
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::GridMismatch);
        }
        Ok(Self { grid, values })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// self += c * other.
    pub fn add_scaled(&mut self, other: &Field, c: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += c * b;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.values {
            *v *= c;
        }
    }
}

/// Complex Fourier coefficients of a field, same layout as the samples.
#[derive(Clone)]
pub struct Spectrum {
    grid: Arc<Grid>,
    coeffs: Vec<Complex64>,
}

impl fmt::Debug for Spectrum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Spectrum")
            .field("grid", &self.grid.spec)
            .finish()
    }
}

impl Spectrum {
    pub fn new(grid: Arc<Grid>, coeffs: Vec<Complex64>) -> Result<Self, GridError> {
        if coeffs.len() != grid.len() {
            return Err(GridError::GridMismatch);
        }
        Ok(Self { grid, coeffs })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    /// Coefficient at the signed mode pair (m1, m2).
    pub fn at(&self, m1: i64, m2: i64) -> Complex64 {
        self.coeffs[self.grid.mode_index(m1, m2)]
    }

    pub fn set(&mut self, m1: i64, m2: i64, c: Complex64) {
        let i = self.grid.mode_index(m1, m2);
        self.coeffs[i] = c;
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.norm()))
    }

    /// self += c * other (componentwise, real scalar).
    pub fn add_scaled(&mut self, other: &Spectrum, c: f64) {
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            a.re += c * b.re;
            a.im += c * b.im;
        }
    }

    pub fn scale(&mut self, c: f64) {
        for v in &mut self.coeffs {
            v.re *= c;
            v.im *= c;
        }
    }

    /// max |c(k) - conj(c(-k))| / max |c|; zero spectra report 0.
    pub fn hermitian_residue(&self) -> f64 {
        let (n1, n2) = (self.grid.n1(), self.grid.n2());
        let mut worst = 0.0f64;
        let mut peak = 0.0f64;
        for i2 in 0..n2 {
            let j2 = if i2 == 0 { 0 } else { n2 - i2 };
            for i1 in 0..n1 {
                let j1 = if i1 == 0 { 0 } else { n1 - i1 };
                let a = self.coeffs[i2 * n1 + i1];
                let b = self.coeffs[j2 * n1 + j1].conj();
                worst = worst.max((a - b).norm());
                peak = peak.max(a.norm());
            }
        }
        if peak == 0.0 {
            0.0
        } else {
            worst / peak
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAU: f64 = 2.0 * std::f64::consts::PI;

    #[test]
    fn spec_validation_rejects_bad_parameters() {
        assert!(Grid::new(GridSpec::new(7, 8, 1.0)).is_err());
        assert!(Grid::new(GridSpec::new(8, 10, 1.0)).is_ok());
        assert!(Grid::new(GridSpec::new(8, 9, 1.0)).is_err());
        assert!(Grid::new(GridSpec::new(6, 8, 1.0)).is_err());
        assert!(Grid::new(GridSpec::new(8, 8, 0.0)).is_err());
        assert!(Grid::new(GridSpec::new(8, 8, -2.0)).is_err());
        assert!(Grid::new(GridSpec::new(8, 8, 1.0).with_dealias_fraction(0.0)).is_err());
        assert!(Grid::new(GridSpec::new(8, 8, 1.0).with_dealias_fraction(1.1)).is_err());
        assert!(Grid::new(GridSpec::new(8, 8, 1.0).with_dealias_fraction(1.0)).is_ok());
    }

    #[test]
    fn wavenumber_tables_match_box_sizes() {
        // L = pi makes pi/L = 1, so the x2 wavenumbers are the integers
        // -4..4 in FFT order; x1 wavenumbers are 2*pi times -4..4.
        let g = Grid::new(GridSpec::new(8, 8, std::f64::consts::PI)).unwrap();
        let expect_m = [0i64, 1, 2, 3, -4, -3, -2, -1];
        for (i, &m) in expect_m.iter().enumerate() {
            assert_eq!(g.k2_table()[i], m as f64);
            assert_eq!(g.k1_table()[i], TAU * m as f64);
            assert_eq!(g.m1_at(i), m);
            assert_eq!(g.m2_at(i), m);
        }
    }

    #[test]
    fn nodes_are_uniform() {
        let g = Grid::new(GridSpec::new(16, 12, 2.5)).unwrap();
        let dx1 = 1.0 / 16.0;
        for (i, &x) in g.x1_nodes().iter().enumerate() {
            assert!((x - i as f64 * dx1).abs() < 1e-15);
        }
        let dx2 = 5.0 / 12.0;
        for (i, &x) in g.x2_nodes().iter().enumerate() {
            assert!((x - (-2.5 + i as f64 * dx2)).abs() < 1e-14);
        }
    }

    #[test]
    fn pure_cosine_has_exactly_two_coefficients() {
        let g = Grid::new(GridSpec::new(32, 16, 3.0)).unwrap();
        let f = g.field_from_fn(|x1, _| (TAU * x1).cos());
        let s = g.forward(&f).unwrap();
        for i2 in 0..16 {
            for i1 in 0..32 {
                let c = s.coeffs()[g.index(i2, i1)];
                let expect = if i2 == 0 && (g.m1_at(i1) == 1 || g.m1_at(i1) == -1) {
                    0.5
                } else {
                    0.0
                };
                assert!(
                    (c.re - expect).abs() < 1e-14 && c.im.abs() < 1e-14,
                    "mode ({}, {}): {c}",
                    g.m1_at(i1),
                    g.m2_at(i2)
                );
            }
        }
    }

    #[test]
    fn constant_field_transforms_to_mean_only() {
        let g = Grid::new(GridSpec::new(16, 8, 1.0)).unwrap();
        let f = g.field_from_fn(|_, _| 1.0);
        let s = g.forward(&f).unwrap();
        assert!((s.at(0, 0).re - 1.0).abs() < 1e-14);
        let rest: f64 = s
            .coeffs()
            .iter()
            .skip(1)
            .map(|c| c.norm())
            .fold(0.0, f64::max);
        assert!(rest < 1e-14);
    }

    fn band_limited(g: &Arc<Grid>, seed: u64) -> Field {
        // Deterministic trig polynomial well inside the dealias band.
        let l = g.half_width();
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut terms = Vec::new();
        for m1 in 0..4i64 {
            for m2 in 1..5i64 {
                terms.push((m1 as f64, m2 as f64, next(), next()));
            }
        }
        g.field_from_fn(|x1, x2| {
            terms
                .iter()
                .map(|&(m1, m2, a, b)| {
                    a * (TAU * m1 * x1).cos() * (std::f64::consts::PI * m2 * x2 / l).sin()
                        + b * (TAU * m1 * x1).sin() * (std::f64::consts::PI * m2 * x2 / l).cos()
                })
                .sum()
        })
    }

    #[test]
    fn round_trip_is_identity_to_1e12() {
        let g = Grid::new(GridSpec::new(32, 24, 4.0)).unwrap();
        let f = band_limited(&g, 7);
        let back = g.inverse(&g.forward(&f).unwrap()).unwrap();
        let peak = f.max_abs();
        let err = f
            .values()
            .iter()
            .zip(back.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err / peak < 1e-12, "relative round-trip error {}", err / peak);
    }

    #[test]
    fn parseval_holds_with_channel_measure() {
        let g = Grid::new(GridSpec::new(32, 24, 4.0)).unwrap();
        let f = band_limited(&g, 13);
        let s = g.forward(&f).unwrap();
        let quad: f64 = f.values().iter().map(|v| v * v).sum::<f64>() * g.cell_area();
        let spec: f64 =
            2.0 * g.half_width() * s.coeffs().iter().map(|c| c.norm_sqr()).sum::<f64>();
        assert!((quad - spec).abs() / quad < 1e-12);
    }

    #[test]
    fn forward_rejects_non_finite_input() {
        let g = Grid::new(GridSpec::new(8, 8, 1.0)).unwrap();
        let mut f = g.zero_field();
        f.values_mut()[5] = f64::NAN;
        assert!(matches!(g.forward(&f), Err(GridError::NonFinite(5))));
    }

    #[test]
    fn derivative_of_sine_is_scaled_cosine() {
        let g = Grid::new(GridSpec::new(64, 8, 1.0)).unwrap();
        let f = g.field_from_fn(|x1, _| (TAU * x1).sin());
        let df = g
            .inverse(&g.derivative(&g.forward(&f).unwrap(), Axis::X1, 1))
            .unwrap();
        let exact = g.field_from_fn(|x1, _| TAU * (TAU * x1).cos());
        let err = df
            .values()
            .iter()
            .zip(exact.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12 * TAU);
    }

    #[test]
    fn x2_derivative_of_x1_only_field_vanishes() {
        let g = Grid::new(GridSpec::new(32, 16, 2.0)).unwrap();
        let f = g.field_from_fn(|x1, _| (TAU * x1).cos() + 0.3);
        let df = g.derivative(&g.forward(&f).unwrap(), Axis::X2, 1);
        assert!(df.max_abs() < 1e-14);
    }

    #[test]
    fn second_x1_derivative_of_localized_mode_is_minus_4pi2_itself() {
        // f = sin(2 pi x1) exp(-x2^2) obeys d11 f = -4 pi^2 f analytically.
        let g = Grid::new(GridSpec::new(32, 128, 8.0)).unwrap();
        let f = g.field_from_fn(|x1, x2| (TAU * x1).sin() * (-x2 * x2).exp());
        let d2 = g
            .inverse(&g.derivative(&g.forward(&f).unwrap(), Axis::X1, 2))
            .unwrap();
        let err = d2
            .values()
            .iter()
            .zip(f.values())
            .map(|(a, b)| (a - (-4.0 * std::f64::consts::PI.powi(2) * b)).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-10, "max error {err}");
    }

    #[test]
    fn mixed_derivatives_commute_to_rounding() {
        // IEEE multiplication is not associative, so the two orders may
        // differ in the last ulp; anything above that is a real defect.
        let g = Grid::new(GridSpec::new(32, 24, 4.0)).unwrap();
        let s = g.forward(&band_limited(&g, 3)).unwrap();
        let d12 = g.derivative(&g.derivative(&s, Axis::X1, 1), Axis::X2, 1);
        let d21 = g.derivative(&g.derivative(&s, Axis::X2, 1), Axis::X1, 1);
        let peak = d12.max_abs();
        let diff = d12
            .coeffs()
            .iter()
            .zip(d21.coeffs())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-15 * peak, "relative {}", diff / peak);
    }

    #[test]
    fn dealias_cutoffs_survive_float_fractions() {
        // 2/3 * 6 = 3.9999999999999996 must still keep |m1| = 4 and zero
        // |m1| = 5 on a 12-point axis.
        let g = Grid::new(GridSpec::new(12, 12, 1.0)).unwrap();
        assert_eq!(g.m1_cut(), 4);
        let mut s = g.zero_spectrum();
        s.set(5, 0, Complex64::new(1.0, 0.0));
        s.set(-5, 0, Complex64::new(1.0, 0.0));
        s.set(4, 0, Complex64::new(2.0, 0.0));
        s.set(-4, 0, Complex64::new(2.0, 0.0));
        s.set(1, 1, Complex64::new(3.0, 0.0));
        let d = g.dealias(&s);
        assert_eq!(d.at(5, 0), Complex64::new(0.0, 0.0));
        assert_eq!(d.at(-5, 0), Complex64::new(0.0, 0.0));
        assert_eq!(d.at(4, 0), Complex64::new(2.0, 0.0));
        assert_eq!(d.at(1, 1), Complex64::new(3.0, 0.0));
    }

    #[test]
    fn dealias_never_increases_energy() {
        let g = Grid::new(GridSpec::new(16, 16, 1.0)).unwrap();
        let f = g.field_from_fn(|x1, x2| (TAU * 7.0 * x1).cos() + (TAU * x1).sin() * x2);
        let s = g.forward(&f).unwrap();
        let before: f64 = s.coeffs().iter().map(|c| c.norm_sqr()).sum();
        let after: f64 = g.dealias(&s).coeffs().iter().map(|c| c.norm_sqr()).sum();
        assert!(after <= before);
    }

    #[test]
    fn streamfunction_of_single_mode_matches_algebra() {
        // omega = sin(2 pi x1) -> psi = -sin(2 pi x1) / (4 pi^2).
        let g = Grid::new(GridSpec::new(32, 16, 2.0)).unwrap();
        let omega = g.field_from_fn(|x1, _| (TAU * x1).sin());
        let psi = g
            .inverse(&g.solve_streamfunction(&g.forward(&omega).unwrap()))
            .unwrap();
        let err = psi
            .values()
            .iter()
            .zip(omega.values())
            .map(|(p, w)| (p - (-w / (TAU * TAU))).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-14);
    }

    #[test]
    fn streamfunction_zero_mode_is_gauged_away() {
        let g = Grid::new(GridSpec::new(16, 8, 1.0)).unwrap();
        let f = g.field_from_fn(|_, _| 5.0);
        let psi = g.solve_streamfunction(&g.forward(&f).unwrap());
        assert!(psi.max_abs() < 1e-14);
    }

    #[test]
    fn pair_transforms_agree_with_single_transforms() {
        let g = Grid::new(GridSpec::new(32, 24, 4.0)).unwrap();
        let a = band_limited(&g, 21);
        let b = band_limited(&g, 22);
        let (sa, sb) = g.forward_pair(&a, &b).unwrap();
        let ra = g.forward(&a).unwrap();
        let rb = g.forward(&b).unwrap();
        let peak = ra.max_abs().max(rb.max_abs());
        for i in 0..g.len() {
            assert!((sa.coeffs()[i] - ra.coeffs()[i]).norm() < 1e-13 * peak);
            assert!((sb.coeffs()[i] - rb.coeffs()[i]).norm() < 1e-13 * peak);
        }
        let (ia, ib) = g.inverse_pair(&sa, &sb).unwrap();
        let fpeak = a.max_abs().max(b.max_abs());
        for i in 0..g.len() {
            assert!((ia.values()[i] - a.values()[i]).abs() < 1e-12 * fpeak);
            assert!((ib.values()[i] - b.values()[i]).abs() < 1e-12 * fpeak);
        }
    }

    #[test]
    fn zero_spectrum_maps_to_zero_through_every_operation() {
        let g = Grid::new(GridSpec::new(16, 8, 1.0)).unwrap();
        let z = g.zero_spectrum();
        assert_eq!(g.derivative(&z, Axis::X1, 3).max_abs(), 0.0);
        assert_eq!(g.dealias(&z).max_abs(), 0.0);
        assert_eq!(g.solve_streamfunction(&z).max_abs(), 0.0);
        assert_eq!(g.inverse(&z).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn hermitian_residue_detects_asymmetry() {
        let g = Grid::new(GridSpec::new(16, 8, 1.0)).unwrap();
        let f = band_limited(&g, 5);
        let mut s = g.forward(&f).unwrap();
        assert!(s.hermitian_residue() < 1e-13);
        let peak = s.max_abs();
        s.set(2, 1, Complex64::new(peak, peak));
        assert!(s.hermitian_residue() > 0.1);
    }

    #[test]
    fn forward_of_real_field_is_hermitian() {
        let g = Grid::new(GridSpec::new(32, 16, 3.0)).unwrap();
        let f = g.field_from_fn(|x1, x2| (TAU * 3.0 * x1).cos() * x2.sin() + 0.1 * x2);
        assert!(g.forward(&f).unwrap().hermitian_residue() < 1e-13);
    }
}
