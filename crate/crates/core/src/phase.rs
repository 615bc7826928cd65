//! Phase-space states and the Hamilton's-equations vector field.
//!
//! A [`HamiltonianField`] supplies a scalar energy `E = H(q, p)` and its exact
//! gradient. [`time_derivative`] turns that gradient into the flow
//! `q̇ = ∂E/∂p`, `ṗ = -∂E/∂q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point `(q, p)` of phase space. Both halves have the same dimension and
/// every component is finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPhaseState")]
pub struct PhaseState {
    q: Vec<f64>,
    p: Vec<f64>,
}

#[derive(Deserialize)]
struct RawPhaseState {
    q: Vec<f64>,
    p: Vec<f64>,
}

impl TryFrom<RawPhaseState> for PhaseState {
    type Error = Error;

    fn try_from(raw: RawPhaseState) -> Result<Self> {
        PhaseState::new(raw.q, raw.p)
    }
}

impl PhaseState {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if q.is_empty() {
            return Err(Error::Shape("phase state needs at least one coordinate".into()));
        }
        if q.len() != p.len() {
            return Err(Error::Shape(format!(
                "position has {} components but momentum has {}",
                q.len(),
                p.len()
            )));
        }
        check_finite("q", &q)?;
        check_finite("p", &p)?;
        Ok(PhaseState { q, p })
    }

    /// Builds a state from a concatenated `q ‖ p` vector of even length.
    pub fn from_concat(y: &[f64]) -> Result<Self> {
        if !y.len().is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "concatenated phase vector has odd length {}",
                y.len()
            )));
        }
        let k = y.len() / 2;
        PhaseState::new(y[..k].to_vec(), y[k..].to_vec())
    }

    pub fn zeros(k: usize) -> Result<Self> {
        PhaseState::new(vec![0.0; k], vec![0.0; k])
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    /// Configuration dimension `k`.
    pub fn dim(&self) -> usize {
        self.q.len()
    }

    pub fn concat(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(2 * self.dim());
        y.extend_from_slice(&self.q);
        y.extend_from_slice(&self.p);
        y
    }

    /// The same configuration with every momentum negated.
    pub fn flip_momentum(&self) -> PhaseState {
        PhaseState {
            q: self.q.clone(),
            p: self.p.iter().map(|v| -v).collect(),
        }
    }

    /// Euclidean distance in the concatenated `(q, p)` coordinates.
    pub fn distance(&self, other: &PhaseState) -> f64 {
        self.q
            .iter()
            .chain(&self.p)
            .zip(other.q.iter().chain(&other.p))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.q, self.p)
    }
}

fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::numerical(
            format!("{name}[{i}]"),
            format!("non-finite value {}", v[i]),
        )),
        None => Ok(()),
    }
}

/// `(q̇, ṗ)` at a phase state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDerivative {
    pub dq: Vec<f64>,
    pub dp: Vec<f64>,
}

/// Partial derivatives of the energy with respect to `q` and `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyGradient {
    pub wrt_q: Vec<f64>,
    pub wrt_p: Vec<f64>,
}

/// Scalar energy on phase space together with its exact gradient.
///
/// Methods take raw slices rather than [`PhaseState`] so integrators can
/// evaluate at intermediate points without re-validating them.
pub trait HamiltonianField {
    /// Configuration dimension `k`; the field acts on `2k`-dimensional phase space.
    fn dim(&self) -> usize;

    fn energy(&self, q: &[f64], p: &[f64]) -> f64;

    fn gradient(&self, q: &[f64], p: &[f64]) -> EnergyGradient;

    fn energy_at(&self, s: &PhaseState) -> f64 {
        self.energy(s.q(), s.p())
    }
}

impl<F: HamiltonianField + ?Sized> HamiltonianField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn energy(&self, q: &[f64], p: &[f64]) -> f64 {
        (**self).energy(q, p)
    }
    fn gradient(&self, q: &[f64], p: &[f64]) -> EnergyGradient {
        (**self).gradient(q, p)
    }
}

impl<F: HamiltonianField + ?Sized> HamiltonianField for Box<F> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn energy(&self, q: &[f64], p: &[f64]) -> f64 {
        (**self).energy(q, p)
    }
    fn gradient(&self, q: &[f64], p: &[f64]) -> EnergyGradient {
        (**self).gradient(q, p)
    }
}

pub(crate) fn check_dim(field: &dyn HamiltonianField, k: usize) -> Result<()> {
    if field.dim() != k {
        return Err(Error::Shape(format!(
            "field acts on k = {} but state has k = {k}",
            field.dim()
        )));
    }
    Ok(())
}

/// Hamilton's equations: `q̇ = ∂E/∂p`, `ṗ = -∂E/∂q`.
pub fn time_derivative(field: &dyn HamiltonianField, s: &PhaseState) -> Result<PhaseDerivative> {
    check_dim(field, s.dim())?;
    let g = field.gradient(s.q(), s.p());
    check_finite("dE/dq", &g.wrt_q)?;
    check_finite("dE/dp", &g.wrt_p)?;
    Ok(PhaseDerivative {
        dq: g.wrt_p,
        dp: g.wrt_q.into_iter().map(|v| -v).collect(),
    })
}

/// Uniformly time-stamped sequence of states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub t: Vec<f64>,
    pub states: Vec<PhaseState>,
}

impl Trajectory {
    pub fn new(dt: f64, states: Vec<PhaseState>) -> Self {
        let t = (0..states.len()).map(|j| j as f64 * dt).collect();
        Trajectory { dt, t, states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first(&self) -> Option<&PhaseState> {
        self.states.first()
    }

    pub fn last(&self) -> Option<&PhaseState> {
        self.states.last()
    }
}
