//! Diagnostics: energy conservation, latent manifold dimension, rollout error
//! curves and cyclic-coordinate reports for trained models.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config_map::gaussian_vector;
use crate::cyclic::{effective_dimension, EffectiveDimension};
use crate::error::{Error, Result};
use crate::hgan::GanModel;
use crate::integrators::{rollout, IntegratorConfig};
use crate::phase::{HamiltonianField, PhaseState, Trajectory};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_VARIANCE_FRACTION: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub schema_version: u32,
    /// `max_t |E_t − E_0| / max(|E_0|, 1)`.
    pub max_rel_drift: f64,
    pub per_step_energies: Vec<f64>,
}

pub fn energy_report(field: &dyn HamiltonianField, traj: &Trajectory) -> Result<EnergyReport> {
    if traj.is_empty() {
        return Err(Error::Shape("energy report needs a non-empty trajectory".into()));
    }
    let energies: Vec<f64> = traj.states.iter().map(|s| field.energy_at(s)).collect();
    let e0 = energies[0];
    let scale = e0.abs().max(1.0);
    let drift = energies.iter().map(|e| (e - e0).abs() / scale).fold(0.0, f64::max);
    Ok(EnergyReport {
        schema_version: REPORT_SCHEMA_VERSION,
        max_rel_drift: drift,
        per_step_energies: energies,
    })
}

/// Eigenvalues of the sample covariance of `points`, largest first.
pub fn pca_spectrum(points: &[Vec<f64>]) -> Result<Vec<f64>> {
    let m = points.len();
    if m < 2 {
        return Err(Error::Shape(format!("PCA needs at least two points, got {m}")));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(Error::Shape("PCA points must share a non-zero dimension".into()));
    }
    let mut mean = vec![0.0; d];
    for p in points {
        for (acc, v) in mean.iter_mut().zip(p) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);
    let centered = DMatrix::from_fn(m, d, |i, j| points[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (m - 1) as f64;
    let mut eig: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().map(|v| v.max(0.0)).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    Ok(eig)
}

/// Smallest `r` whose top-`r` principal components explain at least
/// `variance_fraction` of the total variance; 0 when all points coincide.
pub fn manifold_dimension(points: &[Vec<f64>], variance_fraction: f64) -> Result<usize> {
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(Error::Config(format!("variance fraction must lie in (0, 1], got {variance_fraction}")));
    }
    let eig = pca_spectrum(points)?;
    let total: f64 = eig.iter().sum();
    let largest = eig.first().copied().unwrap_or(0.0);
    if total <= 0.0 || largest <= f64::EPSILON * points[0].len() as f64 * total.max(f64::MIN_POSITIVE) {
        return Ok(0);
    }
    let mut acc = 0.0;
    for (r, v) in eig.iter().enumerate() {
        acc += v;
        // Relative slack so a fraction of exactly 1 is reachable despite rounding.
        if acc >= variance_fraction * total * (1.0 - 1e-12) {
            return Ok(r + 1);
        }
    }
    Ok(eig.len())
}

/// `‖y_learned(t) − y_true(t)‖₂` per step, both integrated with `cfg`.
pub fn rollout_error(
    learned: &dyn HamiltonianField,
    truth: &dyn HamiltonianField,
    s0: &PhaseState,
    cfg: &IntegratorConfig,
) -> Result<Vec<f64>> {
    if learned.dim() != truth.dim() {
        return Err(Error::Shape(format!(
            "learned field has k = {}, reference has k = {}",
            learned.dim(),
            truth.dim()
        )));
    }
    let a = rollout(learned, s0, cfg)?;
    let b = rollout(truth, s0, cfg)?;
    Ok(a.states.iter().zip(&b.states).map(|(x, y)| x.distance(y)).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldReport {
    pub schema_version: u32,
    pub samples: usize,
    pub variance_fraction: f64,
    /// Dimension of the mapped initial states `y₀ = f(z_m)`.
    pub y0_dimension: usize,
    /// Dimension after one leapfrog step.
    pub y1_dimension: usize,
    pub y0_spectrum: Vec<f64>,
    pub y1_spectrum: Vec<f64>,
}

/// Maps `samples` Gaussian motion vectors through the model and measures the
/// PCA dimension of both `y₀` and `y₁`.
pub fn motion_manifold(model: &GanModel, samples: usize, seed: u64, variance_fraction: f64) -> Result<ManifoldReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<Vec<f64>> = (0..samples).map(|_| gaussian_vector(&mut rng, model.arch.motion_dim)).collect();
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = noise
        .par_iter()
        .map(|z| {
            let tr = model.latent_rollout(z, 2)?;
            Ok((tr.states[0].concat(), tr.states[1].concat()))
        })
        .collect::<Result<_>>()?;
    let (y0, y1): (Vec<Vec<f64>>, Vec<Vec<f64>>) = pairs.into_iter().unzip();
    Ok(ManifoldReport {
        schema_version: REPORT_SCHEMA_VERSION,
        samples,
        variance_fraction,
        y0_dimension: manifold_dimension(&y0, variance_fraction)?,
        y1_dimension: manifold_dimension(&y1, variance_fraction)?,
        y0_spectrum: pca_spectrum(&y0)?,
        y1_spectrum: pca_spectrum(&y1)?,
    })
}

/// Cyclic-coordinate analysis of `count` generated latent trajectories of
/// `frames` states each.
pub fn latent_cyclic_report(
    model: &GanModel,
    count: usize,
    frames: usize,
    seed: u64,
    threshold: f64,
) -> Result<EffectiveDimension> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise: Vec<Vec<f64>> = (0..count).map(|_| gaussian_vector(&mut rng, model.arch.motion_dim)).collect();
    let trajs: Vec<Trajectory> = noise
        .par_iter()
        .map(|z| model.latent_rollout(z, frames))
        .collect::<Result<_>>()?;
    effective_dimension(&trajs, &model.hamiltonian, threshold)
}

/// Writes `columns` (equal length) as CSV with a header row.
pub fn write_csv(path: &Path, header: &[&str], columns: &[&[f64]]) -> Result<()> {
    let rows = columns.first().map_or(0, |c| c.len());
    if header.len() != columns.len() || columns.iter().any(|c| c.len() != rows) {
        return Err(Error::Shape("CSV columns must match the header and share a length".into()));
    }
    let csv_err = |e: csv::Error| Error::Io {
        trajectory: None,
        source: e.into(),
    };
    let mut out = csv::Writer::from_path(path).map_err(csv_err)?;
    out.write_record(header).map_err(csv_err)?;
    for i in 0..rows {
        out.write_record(columns.iter().map(|c| format!("{:e}", c[i]))).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}
