//! Cyclic-coordinate penalty and discovery analysis.
//!
//! A coordinate `q_i` that does not enter the energy has `ṗ_i = 0`. The
//! penalty `λ/N · Σ_rows Σ_i |ṗ_i|` pushes a learned energy toward as many
//! such coordinates as the data allows; [`effective_dimension`] counts the
//! ones that remain active along trajectories.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::phase::{time_derivative, HamiltonianField, Trajectory};

pub const DEFAULT_LAMBDA: f64 = 0.01;
pub const DEFAULT_THRESHOLD: f64 = 0.05;

/// Which generated states contribute `ṗ` to the penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CyclicMode {
    /// Every state of the generated rollout, averaged over time.
    #[default]
    WholeSequence,
    /// Only the initial state `y₀`.
    InitialOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CyclicConfig {
    pub lambda: f64,
    pub threshold: f64,
    pub mode: CyclicMode,
}

impl Default for CyclicConfig {
    fn default() -> Self {
        CyclicConfig {
            lambda: DEFAULT_LAMBDA,
            threshold: DEFAULT_THRESHOLD,
            mode: CyclicMode::WholeSequence,
        }
    }
}

impl CyclicConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!("lambda must be non-negative, got {}", self.lambda)));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Config(format!("threshold must be positive, got {}", self.threshold)));
        }
        Ok(())
    }
}

/// `λ · (Σ_rows Σ_i |ṗ_i|) / N` for an `N × latent_dim` batch.
pub fn cyclic_penalty(dp_batch: &[Vec<f64>], lambda: f64) -> Result<f64> {
    if dp_batch.is_empty() {
        return Err(Error::Shape("cyclic penalty needs at least one row".into()));
    }
    let total: f64 = dp_batch.iter().flat_map(|row| row.iter().map(|v| v.abs())).sum();
    Ok(lambda * (total / dp_batch.len() as f64))
}

/// Tape version of [`cyclic_penalty`] over a subset of a batch: sums `|ṗ|`
/// over `rows` and divides by `denominator`, the row count of the full batch.
pub fn cyclic_penalty_tape(tape: &mut Tape, rows: &[Vec<Var>], lambda: f64, denominator: f64) -> Result<Var> {
    if rows.is_empty() || !(denominator > 0.0) {
        return Err(Error::Shape("cyclic penalty needs at least one row".into()));
    }
    let abs: Vec<Var> = rows.iter().flatten().map(|&v| tape.abs(v)).collect();
    let total = tape.sum(&abs);
    let mean = tape.scale(total, 1.0 / denominator);
    Ok(tape.scale(mean, lambda))
}

/// Per-coordinate `mean |ṗ_i|` and the resulting cyclic classification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveDimension {
    pub schema_version: u32,
    pub per_coordinate_mean_abs_dp: Vec<f64>,
    pub cyclic_count: usize,
    /// Number of non-cyclic coordinates.
    pub effective_dimension: usize,
    pub threshold: f64,
}

impl EffectiveDimension {
    pub fn from_means(means: Vec<f64>, threshold: f64) -> Self {
        let cyclic_count = means.iter().filter(|&&m| m < threshold).count();
        EffectiveDimension {
            schema_version: 1,
            effective_dimension: means.len() - cyclic_count,
            per_coordinate_mean_abs_dp: means,
            cyclic_count,
            threshold,
        }
    }

    pub fn is_cyclic(&self, i: usize) -> bool {
        self.per_coordinate_mean_abs_dp[i] < self.threshold
    }
}

/// Classifies coordinate `i` as cyclic when the mean of `|ṗ_i|` over every
/// state of every trajectory is below `threshold`.
pub fn effective_dimension(
    trajs: &[Trajectory],
    field: &dyn HamiltonianField,
    threshold: f64,
) -> Result<EffectiveDimension> {
    let k = field.dim();
    let mut sums = vec![0.0; k];
    let mut count = 0usize;
    for tr in trajs {
        for s in &tr.states {
            let d = time_derivative(field, s)?;
            for (acc, v) in sums.iter_mut().zip(&d.dp) {
                *acc += v.abs();
            }
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Config("effective dimension needs at least one state".into()));
    }
    Ok(EffectiveDimension::from_means(
        sums.into_iter().map(|s| s / count as f64).collect(),
        threshold,
    ))
}
