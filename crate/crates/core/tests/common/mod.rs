//! Reference oracles shared by the integration tests.
//!
//! Everything here is deliberately independent of the library under test:
//! the matrix exponential is scaling-and-squaring on a 2x2, the ODE
//! integrator is a textbook fixed-step RK4, and the constants are frozen
//! closed-form values. The dynamics tests compare the solver against these,
//! so none of this may ever call into `absq_core`.

#![allow(dead_code)]

use num_complex::Complex64;

pub type C = Complex64;
pub type Mat2 = [[C; 2]; 2];
pub type Vec2 = [C; 2];

/// sqrt(pi/3), the whole-line integral of exp(-3 x^2).
pub const SQRT_PI_OVER_3: f64 = 1.0233267079464885;

/// 1/(2 pi), the sharp L2 Poincare ratio on the unit torus (attained at |m1| = 1).
pub const INV_TWO_PI: f64 = 0.159_154_943_091_895_35;

/// Linearization of the perturbation system at a single Fourier mode
/// (k1, k2), acting on (omega_hat, theta_hat):
///
///   d/dt omega_hat = -nu k1^2 omega_hat + i k1 theta_hat
///   d/dt theta_hat =  i k1 / |k|^2 omega_hat - kappa k1^2 theta_hat
///
/// Derived by dropping u.grad terms from the vorticity form and substituting
/// u2_hat = -i k1 omega_hat / |k|^2.
pub fn mode_matrix(k1: f64, k2: f64, nu: f64, kappa: f64) -> Mat2 {
    let ksq = k1 * k1 + k2 * k2;
    [
        [C::new(-nu * k1 * k1, 0.0), C::new(0.0, k1)],
        [C::new(0.0, k1 / ksq), C::new(-kappa * k1 * k1, 0.0)],
    ]
}

/// Eigenvalues of a 2x2 complex matrix by the quadratic formula.
pub fn eig2(a: &Mat2) -> (C, C) {
    let tr = a[0][0] + a[1][1];
    let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
    let disc = (tr * tr - 4.0 * det).sqrt();
    ((tr + disc) / 2.0, (tr - disc) / 2.0)
}

fn mat_mul(a: &Mat2, b: &Mat2) -> Mat2 {
    let mut r = [[C::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    r
}

pub fn mat_vec(a: &Mat2, v: &Vec2) -> Vec2 {
    [
        a[0][0] * v[0] + a[0][1] * v[1],
        a[1][0] * v[0] + a[1][1] * v[1],
    ]
}

fn mat_norm(a: &Mat2) -> f64 {
    a.iter().flatten().map(|c| c.norm()).sum()
}

/// exp(a t) by scaling-and-squaring with a Taylor kernel. Works for any 2x2,
/// repeated eigenvalues included; accuracy is far below 1e-12 for the scaled
/// norms used here.
pub fn expm2(a: &Mat2, t: f64) -> Mat2 {
    let mut at = [[C::new(0.0, 0.0); 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            at[i][j] = a[i][j] * t;
        }
    }
    let mut squarings = 0u32;
    while mat_norm(&at) > 0.5 {
        for row in at.iter_mut() {
            for e in row.iter_mut() {
                *e *= 0.5;
            }
        }
        squarings += 1;
    }
    // Taylor: sum_{k=0..24} (at)^k / k!
    let one = C::new(1.0, 0.0);
    let mut result = [[one, C::new(0.0, 0.0)], [C::new(0.0, 0.0), one]];
    let mut term = result;
    for k in 1..25 {
        term = mat_mul(&term, &at);
        let inv = 1.0 / k as f64;
        for (ri, ti) in result.iter_mut().zip(term.iter_mut()) {
            for (r, t) in ri.iter_mut().zip(ti.iter_mut()) {
                *t *= inv;
                *r += *t;
            }
        }
    }
    for _ in 0..squarings {
        result = mat_mul(&result, &result);
    }
    result
}

/// Fixed-step classical RK4 for y' = a y, the brute-force check on expm2.
pub fn rk4_linear(a: &Mat2, y0: &Vec2, t: f64, steps: usize) -> Vec2 {
    let h = t / steps as f64;
    let mut y = *y0;
    for _ in 0..steps {
        let k1 = mat_vec(a, &y);
        let k2 = mat_vec(a, &[y[0] + 0.5 * h * k1[0], y[1] + 0.5 * h * k1[1]]);
        let k3 = mat_vec(a, &[y[0] + 0.5 * h * k2[0], y[1] + 0.5 * h * k2[1]]);
        let k4 = mat_vec(a, &[y[0] + h * k3[0], y[1] + h * k3[1]]);
        y[0] += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]);
        y[1] += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]);
    }
    y
}

/// Mode energy |omega_hat|^2 / |k|^2 + |theta_hat|^2 (velocity plus thermal
/// energy carried by one Fourier mode).
pub fn mode_energy(y: &Vec2, k1: f64, k2: f64) -> f64 {
    y[0].norm_sqr() / (k1 * k1 + k2 * k2) + y[1].norm_sqr()
}
