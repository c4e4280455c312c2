//! Initial states for the experiment presets.
//!
//! Every non-trivial preset is normalized so that the combined size
//! sqrt(||u||_H2^2 + ||theta||_H2^2) equals the requested epsilon exactly,
//! which is the quantity the small-data boundedness and decay experiments
//! budget against. Vorticity always carries the zero-mean gauge.

use crate::dynamics::State;
use crate::grid::{Grid, GridError, Spectrum};
use crate::inequalities::{random_field, InequalityError};
use crate::norms::{sobolev_norm_spectrum, velocity_sobolev_norm, NormError};
use rustfft::num_complex::Complex64;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IcError {
    #[error("epsilon must be finite and >= 0, got {0}")]
    BadEpsilon(f64),
    #[error("preset produced a zero state and cannot be normalized")]
    DegenerateNorm,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Random(#[from] InequalityError),
    #[error(transparent)]
    Norm(#[from] NormError),
}

/// Named initial-condition families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcPreset {
    /// Identically zero data; epsilon is ignored.
    Zero,
    /// Localized Gaussian bumps, 70% horizontal-average part and 30%
    /// oscillation at |m1| = 1, envelope sigma = L/8.
    GaussianPair,
    /// The single conjugate mode pair (1, 1): omega = 1, theta = 0.5+0.25i
    /// before normalization. Not localized.
    SingleMode,
    /// Band-limited seeded noise with a Gaussian envelope.
    Random { seed: u64 },
}

impl IcPreset {
    /// Parse the config-file spelling: `zero`, `gaussian_pair`,
    /// `single_mode`, `random(<seed>)`.
    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "zero" => Some(IcPreset::Zero),
            "gaussian_pair" => Some(IcPreset::GaussianPair),
            "single_mode" => Some(IcPreset::SingleMode),
            _ => {
                let inner = text.strip_prefix("random(")?.strip_suffix(')')?;
                inner.trim().parse::<u64>().ok().map(|seed| IcPreset::Random { seed })
            }
        }
    }

    /// Whether the data is concentrated away from the channel walls, which
    /// arms the wall-zone spill monitor during runs.
    pub fn localized(&self) -> bool {
        !matches!(self, IcPreset::SingleMode)
    }
}

impl fmt::Display for IcPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IcPreset::Zero => write!(f, "zero"),
            IcPreset::GaussianPair => write!(f, "gaussian_pair"),
            IcPreset::SingleMode => write!(f, "single_mode"),
            IcPreset::Random { seed } => write!(f, "random({seed})"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct InitialCondition {
    pub state: State,
    pub localized: bool,
}

fn combined_h2(omega_hat: &Spectrum, theta_hat: &Spectrum) -> Result<f64, NormError> {
    Ok((velocity_sobolev_norm(omega_hat, 2.0)?.powi(2)
        + sobolev_norm_spectrum(theta_hat, 2.0)?.powi(2))
    .sqrt())
}

fn gaussian_pair_spectra(grid: &Arc<Grid>) -> Result<(Spectrum, Spectrum), GridError> {
    let sigma = grid.half_width() / 8.0;
    let tau = std::f64::consts::TAU;
    let env = move |x2: f64| (-(x2 * x2) / (sigma * sigma)).exp();
    // The average part of omega must be the x2-derivative of a localized
    // odd jet. Anything else (for example a bare odd bump) induces a mean
    // shear whose gauge offset fills the whole channel and defeats the
    // wall-spill monitor. Here u1_bar is proportional to (x2/sigma) env.
    let omega = grid.field_from_fn(|x1, x2| {
        let s = x2 / sigma;
        0.7 * (2.0 * s * s - 1.0) * env(x2) + 0.3 * (tau * x1).sin() * env(x2)
    });
    let theta = grid.field_from_fn(|x1, x2| {
        0.7 * env(x2) + 0.3 * (tau * x1).cos() * (x2 / sigma) * env(x2)
    });
    let omega_hat = grid.dealias(&grid.forward(&omega)?);
    let theta_hat = grid.dealias(&grid.forward(&theta)?);
    Ok((omega_hat, theta_hat))
}

fn single_mode_spectra(grid: &Arc<Grid>) -> (Spectrum, Spectrum) {
    let mut omega_hat = grid.zero_spectrum();
    let mut theta_hat = grid.zero_spectrum();
    omega_hat.set(1, 1, Complex64::new(1.0, 0.0));
    omega_hat.set(-1, -1, Complex64::new(1.0, 0.0));
    theta_hat.set(1, 1, Complex64::new(0.5, 0.25));
    theta_hat.set(-1, -1, Complex64::new(0.5, -0.25));
    (omega_hat, theta_hat)
}

fn random_spectra(grid: &Arc<Grid>, seed: u64) -> Result<(Spectrum, Spectrum), IcError> {
    let band = 6usize.min(grid.n1() / 2 - 1).min(grid.n2() / 2 - 1).max(1);
    let sigma = grid.half_width() / 8.0;
    let omega = random_field(grid, seed.wrapping_mul(2).wrapping_add(1), band, sigma)?;
    let theta = random_field(grid, seed.wrapping_mul(2).wrapping_add(2), band, sigma)?;
    // Random average vorticity has no reason to be the derivative of a
    // localized jet, so its induced shear would reach the walls. Start the
    // vorticity purely oscillatory; the dynamics regenerates an average
    // part whose jet stays localized.
    let omega_hat = crate::decomposition::oscillation_spectrum(&grid.dealias(&grid.forward(&omega)?));
    let theta_hat = grid.dealias(&grid.forward(&theta)?);
    Ok((omega_hat, theta_hat))
}

/// Build the preset's state on `grid`, scaled to combined H2 size `epsilon`.
pub fn initial_state(
    grid: &Arc<Grid>,
    preset: IcPreset,
    epsilon: f64,
) -> Result<InitialCondition, IcError> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(IcError::BadEpsilon(epsilon));
    }
    if matches!(preset, IcPreset::Zero) {
        return Ok(InitialCondition {
            state: State::zero(grid),
            localized: true,
        });
    }
    let (mut omega_hat, mut theta_hat) = match preset {
        IcPreset::Zero => unreachable!(),
        IcPreset::GaussianPair => gaussian_pair_spectra(grid)?,
        IcPreset::SingleMode => single_mode_spectra(grid),
        IcPreset::Random { seed } => random_spectra(grid, seed)?,
    };
    omega_hat.set(0, 0, Complex64::new(0.0, 0.0));

    let size = combined_h2(&omega_hat, &theta_hat)?;
    if size == 0.0 {
        return Err(IcError::DegenerateNorm);
    }
    let scale = epsilon / size;
    omega_hat.scale(scale);
    theta_hat.scale(scale);

    Ok(InitialCondition {
        state: State::new(omega_hat, theta_hat, 0.0)?,
        localized: preset.localized(),
    })
}
