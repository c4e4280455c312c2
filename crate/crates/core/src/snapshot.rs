//! Binary field snapshots and the run manifest.
//!
//! Each snapshot file holds one real scalar field: a 32-byte header (magic
//! `ABSQ`, format version, grid shape, channel half-width, payload kind)
//! followed by the samples as little-endian f64 in row-major order with x1
//! fastest. A run writes `omega_{step:08}.bin` / `theta_{step:08}.bin` pairs
//! plus a `manifest.json` that records the physical parameters and the file
//! list, which is everything `load_snapshots` needs to rebuild the states
//! for offline budget evaluation.

use crate::dynamics::State;
use crate::grid::{Field, Grid, GridError, GridSpec};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"ABSQ";
pub const SNAPSHOT_VERSION: u32 = 1;
pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0} is not a field snapshot (bad magic)")]
    BadMagic(PathBuf),
    #[error("unsupported snapshot version {0}")]
    BadVersion(u32),
    #[error("unknown payload kind {0}")]
    BadKind(u32),
    #[error("{path}: payload truncated (expected {expected} samples, got {found})")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("snapshot grid {found_n1}x{found_n2} does not match manifest {n1}x{n2}")]
    GridMismatch {
        n1: usize,
        n2: usize,
        found_n1: usize,
        found_n2: usize,
    },
    #[error("manifest problem: {0}")]
    Manifest(String),
    #[error("manifest json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SnapshotError + '_ {
    move |source| SnapshotError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// What a snapshot file's payload represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Omega,
    Theta,
    Psi,
    U1,
    U2,
    ThetaFull,
}

impl FieldKind {
    fn code(self) -> u32 {
        match self {
            FieldKind::Omega => 1,
            FieldKind::Theta => 2,
            FieldKind::Psi => 3,
            FieldKind::U1 => 4,
            FieldKind::U2 => 5,
            FieldKind::ThetaFull => 6,
        }
    }

    fn from_code(code: u32) -> Result<Self, SnapshotError> {
        Ok(match code {
            1 => FieldKind::Omega,
            2 => FieldKind::Theta,
            3 => FieldKind::Psi,
            4 => FieldKind::U1,
            5 => FieldKind::U2,
            6 => FieldKind::ThetaFull,
            other => return Err(SnapshotError::BadKind(other)),
        })
    }
}

/// Write one field to `path`. The header pins the grid shape so readers can
/// refuse mismatched payloads without guessing.
pub fn write_field(path: &Path, field: &Field, kind: FieldKind) -> Result<(), SnapshotError> {
    let g = field.grid();
    let mut buf = Vec::with_capacity(32 + field.values().len() * 8);
    buf.extend_from_slice(&SNAPSHOT_MAGIC);
    buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(g.n1() as u32).to_le_bytes());
    buf.extend_from_slice(&(g.n2() as u32).to_le_bytes());
    buf.extend_from_slice(&g.half_width().to_le_bytes());
    buf.extend_from_slice(&kind.code().to_le_bytes());
    buf.extend_from_slice(&0u32.to_le_bytes()); // reserved
    for v in field.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&buf).map_err(io_err(path))?;
    Ok(())
}

/// A snapshot read back from disk, not yet attached to a grid.
#[derive(Debug, Clone)]
pub struct RawSnapshot {
    pub kind: FieldKind,
    pub n1: usize,
    pub n2: usize,
    pub half_width: f64,
    pub values: Vec<f64>,
}

impl RawSnapshot {
    /// Attach to `grid`, checking shape and half-width.
    pub fn into_field(self, grid: &Arc<Grid>) -> Result<Field, SnapshotError> {
        if self.n1 != grid.n1()
            || self.n2 != grid.n2()
            || (self.half_width - grid.half_width()).abs() > 1e-12 * grid.half_width()
        {
            return Err(SnapshotError::GridMismatch {
                n1: grid.n1(),
                n2: grid.n2(),
                found_n1: self.n1,
                found_n2: self.n2,
            });
        }
        Ok(Field::new(Arc::clone(grid), self.values)?)
    }
}

pub fn read_field(path: &Path) -> Result<RawSnapshot, SnapshotError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    if bytes.len() < 32 || bytes[..4] != SNAPSHOT_MAGIC {
        return Err(SnapshotError::BadMagic(path.to_path_buf()));
    }
    let u32_at = |off: usize| u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != SNAPSHOT_VERSION {
        return Err(SnapshotError::BadVersion(version));
    }
    let n1 = u32_at(8) as usize;
    let n2 = u32_at(12) as usize;
    let half_width = f64::from_le_bytes(bytes[16..24].try_into().unwrap());
    let kind = FieldKind::from_code(u32_at(24))?;
    let payload = &bytes[32..];
    let found = payload.len() / 8;
    if found != n1 * n2 || payload.len() % 8 != 0 {
        return Err(SnapshotError::Truncated {
            path: path.to_path_buf(),
            expected: n1 * n2,
            found,
        });
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(RawSnapshot {
        kind,
        n1,
        n2,
        half_width,
        values,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestGrid {
    pub n1: usize,
    pub n2: usize,
    pub half_width: f64,
    pub dealias_fraction: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub step: usize,
    pub t: f64,
    pub omega: String,
    pub theta: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub schema: u32,
    pub dt: f64,
    pub nu: f64,
    pub kappa: f64,
    pub grid: ManifestGrid,
    pub entries: Vec<ManifestEntry>,
}

/// Streams (omega, theta) pairs of a run into a directory and finalizes the
/// manifest. Designed to be driven from the run loop's snapshot sink.
pub struct SnapshotWriter {
    dir: PathBuf,
    grid: Arc<Grid>,
    manifest: Manifest,
}

impl SnapshotWriter {
    pub fn create(
        dir: &Path,
        grid: &Arc<Grid>,
        dt: f64,
        nu: f64,
        kappa: f64,
    ) -> Result<Self, SnapshotError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            grid: Arc::clone(grid),
            manifest: Manifest {
                schema: 1,
                dt,
                nu,
                kappa,
                grid: ManifestGrid {
                    n1: grid.n1(),
                    n2: grid.n2(),
                    half_width: grid.half_width(),
                    dealias_fraction: grid.spec().dealias_fraction,
                },
                entries: Vec::new(),
            },
        })
    }

    pub fn write_state(&mut self, step: usize, state: &State) -> Result<(), SnapshotError> {
        let omega = self.grid.inverse(&state.omega_hat)?;
        let theta = self.grid.inverse(&state.theta_hat)?;
        let omega_name = format!("omega_{step:08}.bin");
        let theta_name = format!("theta_{step:08}.bin");
        write_field(&self.dir.join(&omega_name), &omega, FieldKind::Omega)?;
        write_field(&self.dir.join(&theta_name), &theta, FieldKind::Theta)?;
        self.manifest.entries.push(ManifestEntry {
            step,
            t: state.t,
            omega: omega_name,
            theta: theta_name,
        });
        Ok(())
    }

    pub fn entry_count(&self) -> usize {
        self.manifest.entries.len()
    }

    /// Write the manifest; call once after the run finishes.
    pub fn finalize(&self) -> Result<PathBuf, SnapshotError> {
        let path = self.dir.join(MANIFEST_NAME);
        let json = serde_json::to_vec_pretty(&self.manifest)?;
        fs::write(&path, json).map_err(io_err(&path))?;
        Ok(path)
    }
}

/// A full snapshot directory loaded back into spectral states.
pub struct SnapshotSet {
    pub states: Vec<State>,
    pub grid: Arc<Grid>,
    pub dt: f64,
    pub nu: f64,
    pub kappa: f64,
}

pub fn load_snapshots(dir: &Path) -> Result<SnapshotSet, SnapshotError> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let bytes = fs::read(&manifest_path).map_err(io_err(&manifest_path))?;
    let manifest: Manifest = serde_json::from_slice(&bytes)?;
    if manifest.schema != 1 {
        return Err(SnapshotError::Manifest(format!(
            "unsupported manifest schema {}",
            manifest.schema
        )));
    }
    if manifest.entries.is_empty() {
        return Err(SnapshotError::Manifest("manifest lists no snapshots".into()));
    }
    let grid = Grid::new(
        GridSpec::new(manifest.grid.n1, manifest.grid.n2, manifest.grid.half_width)
            .with_dealias_fraction(manifest.grid.dealias_fraction),
    )?;
    let mut states = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let omega_raw = read_field(&dir.join(&entry.omega))?;
        let theta_raw = read_field(&dir.join(&entry.theta))?;
        if omega_raw.kind != FieldKind::Omega || theta_raw.kind != FieldKind::Theta {
            return Err(SnapshotError::Manifest(format!(
                "entry at step {} names files of the wrong kind",
                entry.step
            )));
        }
        let mut omega_hat = grid.dealias(&grid.forward(&omega_raw.into_field(&grid)?)?);
        let theta_hat = grid.dealias(&grid.forward(&theta_raw.into_field(&grid)?)?);
        // vorticity gauge: the horizontal mean carries no velocity
        omega_hat.set(0, 0, rustfft::num_complex::Complex64::new(0.0, 0.0));
        states.push(State::new(omega_hat, theta_hat, entry.t)?);
    }
    Ok(SnapshotSet {
        states,
        grid,
        dt: manifest.dt,
        nu: manifest.nu,
        kappa: manifest.kappa,
    })
}
