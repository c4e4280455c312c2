//! Horizontal average / oscillation split f = f_bar + f_tilde, where f_bar
//! is the mean over the periodic x1 direction and f_tilde the remainder.
//!
//! On the discrete grid the average is exactly the m1 = 0 Fourier slice, so
//! the split is an orthogonal projector in both representations. Spectrum
//! level ops are bitwise idempotent; field level ops subtract the line mean
//! directly (the same projection, computed without a transform).

use crate::grid::{Axis, Field, Grid, GridError, Spectrum};
use rustfft::num_complex::Complex64;
use std::sync::Arc;

/// A function of x2 alone, sampled at the n2 vertical nodes.
#[derive(Debug, Clone)]
pub struct Profile {
    grid: Arc<Grid>,
    values: Vec<f64>,
}

impl Profile {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.n2() {
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

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// L2 norm over the channel; the x1 direction has unit length, so this
    /// is the x2 quadrature alone.
    pub fn l2_norm(&self) -> f64 {
        let dx2 = 2.0 * self.grid.half_width() / self.grid.n2() as f64;
        (self.values.iter().map(|v| v * v).sum::<f64>() * dx2).sqrt()
    }

    /// Expand back to a full field, constant along x1.
    pub fn broadcast(&self) -> Field {
        let n1 = self.grid.n1();
        let mut values = Vec::with_capacity(self.grid.len());
        for &v in &self.values {
            values.extend(std::iter::repeat(v).take(n1));
        }
        Field::new(Arc::clone(&self.grid), values).expect("length n1*n2 by construction")
    }

    /// Two-column CSV (x2, value) with a header row.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<(), csv::Error> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["x2", "value"])?;
        for (x2, v) in self.grid.x2_nodes().iter().zip(&self.values) {
            out.write_record([format!("{x2:.17e}"), format!("{v:.17e}")])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Mean of f over the x1 nodes, one value per x2 line.
pub fn horizontal_average(f: &Field) -> Profile {
    let g = f.grid();
    let n1 = g.n1();
    let inv = 1.0 / n1 as f64;
    let values = f
        .values()
        .chunks_exact(n1)
        .map(|line| line.iter().sum::<f64>() * inv)
        .collect();
    Profile {
        grid: Arc::clone(g),
        values,
    }
}

/// f_tilde = f - f_bar, broadcast over x1.
pub fn oscillation(f: &Field) -> Field {
    let g = f.grid();
    let n1 = g.n1();
    let inv = 1.0 / n1 as f64;
    let mut out = f.clone();
    for line in out.values_mut().chunks_exact_mut(n1) {
        let mean = line.iter().sum::<f64>() * inv;
        for v in line {
            *v -= mean;
        }
    }
    out
}

/// Keep only the m1 = 0 column: the coefficients of f_bar.
pub fn bar_spectrum(s: &Spectrum) -> Spectrum {
    let g = Arc::clone(s.grid());
    let n1 = g.n1();
    let mut out = g.zero_spectrum();
    for (dst, src) in out
        .coeffs_mut()
        .chunks_exact_mut(n1)
        .zip(s.coeffs().chunks_exact(n1))
    {
        dst[0] = src[0];
    }
    out
}

/// Zero the m1 = 0 column: the coefficients of f_tilde.
pub fn oscillation_spectrum(s: &Spectrum) -> Spectrum {
    let n1 = s.grid().n1();
    let mut out = s.clone();
    for line in out.coeffs_mut().chunks_exact_mut(n1) {
        line[0] = Complex64::new(0.0, 0.0);
    }
    out
}

/// The m1 = 0 Fourier slice of s, resampled at the x2 nodes. Agrees with
/// `horizontal_average` of the corresponding field to rounding.
pub fn profile_from_spectrum(s: &Spectrum) -> Result<Profile, GridError> {
    let g = Arc::clone(s.grid());
    let field = g.inverse(&bar_spectrum(s))?;
    let n1 = g.n1();
    let values = field
        .values()
        .chunks_exact(n1)
        .map(|line| line[0])
        .collect();
    Ok(Profile { grid: g, values })
}

/// Consistency measurements for a velocity/temperature state.
#[derive(Debug, Clone, serde::Serialize)]
pub struct DecompositionReport {
    /// max |div(u_bar)| over the grid.
    pub div_bar_max: f64,
    /// max |div(u_tilde)| over the grid.
    pub div_tilde_max: f64,
    /// max |u2_bar|; vanishes for any velocity with a stream function.
    pub bar_u2_max: f64,
    /// |(theta_bar, theta_tilde)| in L2, which orthogonality makes ~0.
    pub mean_osc_inner: f64,
    /// |‖θ‖² − ‖θ̄‖² − ‖θ̃‖²| / ‖θ‖² (0 for θ = 0).
    pub pythagoras_residual: f64,
    /// Names of the quantities above that exceeded 1e-8.
    pub flags: Vec<String>,
}

/// Measure how well (u1, u2, theta) respects divergence-freeness, the
/// vanishing of the averaged vertical velocity, and L2 orthogonality of
/// the decomposition. Violations above 1e-8 are flagged, not rejected.
pub fn decomposition_report(
    u1: &Field,
    u2: &Field,
    theta: &Field,
) -> Result<DecompositionReport, GridError> {
    let g = Arc::clone(u1.grid());
    let (s1, s2) = g.forward_pair(u1, u2)?;

    let div_of = |a: &Spectrum, b: &Spectrum| -> Result<f64, GridError> {
        let mut d = g.derivative(a, Axis::X1, 1);
        d.add_scaled(&g.derivative(b, Axis::X2, 1), 1.0);
        Ok(g.inverse(&d)?.max_abs())
    };
    let div_bar_max = div_of(&bar_spectrum(&s1), &bar_spectrum(&s2))?;
    let div_tilde_max = div_of(&oscillation_spectrum(&s1), &oscillation_spectrum(&s2))?;

    let bar_u2_max = horizontal_average(u2).max_abs();

    let theta_bar = horizontal_average(theta);
    let theta_tilde = oscillation(theta);
    let area = g.cell_area();
    let n1 = g.n1();
    let mut inner = 0.0;
    let mut tilde_sq = 0.0;
    for (line, &mean) in theta_tilde
        .values()
        .chunks_exact(n1)
        .zip(theta_bar.values())
    {
        let line_sum: f64 = line.iter().sum();
        inner += mean * line_sum;
        tilde_sq += line.iter().map(|v| v * v).sum::<f64>();
    }
    let mean_osc_inner = (inner * area).abs();
    let total_sq: f64 = theta.values().iter().map(|v| v * v).sum::<f64>() * area;
    let bar_sq = theta_bar.l2_norm().powi(2);
    let pythagoras_residual = if total_sq == 0.0 {
        0.0
    } else {
        (total_sq - bar_sq - tilde_sq * area).abs() / total_sq
    };

    let mut flags = Vec::new();
    for (name, value) in [
        ("div_bar_max", div_bar_max),
        ("div_tilde_max", div_tilde_max),
        ("bar_u2_max", bar_u2_max),
        ("mean_osc_inner", mean_osc_inner),
    ] {
        if value > 1e-8 {
            flags.push(name.to_string());
        }
    }

    Ok(DecompositionReport {
        div_bar_max,
        div_tilde_max,
        bar_u2_max,
        mean_osc_inner,
        pythagoras_residual,
        flags,
    })
}
