//! Ground-truth Hamiltonians for the toy-physics systems.
//!
//! | kind             | k | energy                                                         |
//! |------------------|---|----------------------------------------------------------------|
//! | mass_spring      | 1 | `p²/(2m) + k_s q²/2`                                           |
//! | pendulum         | 1 | `p²/(2ml²) + mgl(1 - cos q)`                                   |
//! | double_pendulum  | 2 | two-link pendulum, configuration-dependent mass matrix          |
//! | two_body         | 4 | planar Cartesian, `Σ|p_i|²/(2m_i) - G m₁m₂/r`                  |
//! | three_body       | 6 | planar Cartesian, softened `-G m_i m_j / √(d² + ε²)`           |
//!
//! Positions are measured from a pivot (pendulums) or rest length (spring) at
//! the world origin, so every potential is zero at rest except gravitation.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{EnergyGradient, HamiltonianField, PhaseState};

const MAX_SAMPLING_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    MassSpring,
    Pendulum,
    DoublePendulum,
    TwoBody,
    ThreeBody,
}

impl SystemKind {
    pub const ALL: [SystemKind; 5] = [
        SystemKind::MassSpring,
        SystemKind::Pendulum,
        SystemKind::DoublePendulum,
        SystemKind::TwoBody,
        SystemKind::ThreeBody,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SystemKind::MassSpring => "mass_spring",
            SystemKind::Pendulum => "pendulum",
            SystemKind::DoublePendulum => "double_pendulum",
            SystemKind::TwoBody => "two_body",
            SystemKind::ThreeBody => "three_body",
        }
    }

    /// Configuration dimension of the system.
    pub fn phase_dim(self) -> usize {
        match self {
            SystemKind::MassSpring | SystemKind::Pendulum => 1,
            SystemKind::DoublePendulum => 2,
            SystemKind::TwoBody => 4,
            SystemKind::ThreeBody => 6,
        }
    }

    pub fn body_count(self) -> usize {
        match self {
            SystemKind::MassSpring | SystemKind::Pendulum => 1,
            SystemKind::DoublePendulum | SystemKind::TwoBody => 2,
            SystemKind::ThreeBody => 3,
        }
    }

    /// Whether the energy splits as `T(p) + V(q)`.
    pub fn is_separable(self) -> bool {
        !matches!(self, SystemKind::DoublePendulum)
    }

    /// Parameter names and their defaults.
    pub fn default_params(self) -> &'static [(&'static str, f64)] {
        match self {
            SystemKind::MassSpring => &[("m", 1.0), ("k", 1.0)],
            SystemKind::Pendulum => &[("m", 1.0), ("l", 1.0), ("g", 1.0)],
            SystemKind::DoublePendulum => &[
                ("m1", 1.0),
                ("m2", 1.0),
                ("l1", 1.0),
                ("l2", 1.0),
                ("g", 1.0),
            ],
            SystemKind::TwoBody => &[("m1", 1.0), ("m2", 1.0), ("G", 1.0)],
            SystemKind::ThreeBody => &[
                ("m1", 1.0),
                ("m2", 1.0),
                ("m3", 1.0),
                ("G", 1.0),
                ("softening", 0.05),
            ],
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SystemKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s.replace('-', "_"))
            .ok_or_else(|| Error::Config(format!("unknown system kind `{s}`")))
    }
}

/// A system kind together with its fully resolved physical parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSystemSpec")]
pub struct SystemSpec {
    pub kind: SystemKind,
    pub params: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystemSpec {
    kind: SystemKind,
    #[serde(default)]
    params: BTreeMap<String, f64>,
}

impl TryFrom<RawSystemSpec> for SystemSpec {
    type Error = Error;

    fn try_from(raw: RawSystemSpec) -> Result<Self> {
        SystemSpec::new(raw.kind, raw.params)
    }
}

impl SystemSpec {
    /// Validates `overrides` against the kind's parameter set and fills defaults.
    pub fn new(kind: SystemKind, overrides: BTreeMap<String, f64>) -> Result<Self> {
        let defaults = kind.default_params();
        for name in overrides.keys() {
            if !defaults.iter().any(|(n, _)| n == name) {
                return Err(Error::Config(format!(
                    "unknown parameter `{name}` for {kind}"
                )));
            }
        }
        let params: BTreeMap<String, f64> = defaults
            .iter()
            .map(|&(n, v)| (n.to_string(), overrides.get(n).copied().unwrap_or(v)))
            .collect();
        for (name, &v) in &params {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!(
                    "{kind} parameter `{name}` must be positive and finite, got {v}"
                )));
            }
        }
        Ok(SystemSpec { kind, params })
    }

    pub fn with_defaults(kind: SystemKind) -> Self {
        SystemSpec::new(kind, BTreeMap::new()).expect("defaults are valid")
    }

    pub fn param(&self, name: &str) -> f64 {
        self.params[name]
    }

    pub fn phase_dim(&self) -> usize {
        self.kind.phase_dim()
    }

    fn masses(&self) -> Vec<f64> {
        (1..=self.kind.body_count())
            .map(|i| self.param(&format!("m{i}")))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Model {
    MassSpring { m: f64, k: f64 },
    Pendulum { m: f64, l: f64, g: f64 },
    DoublePendulum { m1: f64, m2: f64, l1: f64, l2: f64, g: f64 },
    Gravity { masses: Vec<f64>, big_g: f64, softening: f64 },
}

/// One of the toy systems with hand-derived analytic gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticSystem {
    spec: SystemSpec,
    model: Model,
}

/// Builds the analytic field for `kind` with `params` overriding the defaults.
pub fn make_system(kind: SystemKind, params: BTreeMap<String, f64>) -> Result<AnalyticSystem> {
    Ok(AnalyticSystem::new(SystemSpec::new(kind, params)?))
}

impl AnalyticSystem {
    pub fn new(spec: SystemSpec) -> Self {
        let model = match spec.kind {
            SystemKind::MassSpring => Model::MassSpring {
                m: spec.param("m"),
                k: spec.param("k"),
            },
            SystemKind::Pendulum => Model::Pendulum {
                m: spec.param("m"),
                l: spec.param("l"),
                g: spec.param("g"),
            },
            SystemKind::DoublePendulum => Model::DoublePendulum {
                m1: spec.param("m1"),
                m2: spec.param("m2"),
                l1: spec.param("l1"),
                l2: spec.param("l2"),
                g: spec.param("g"),
            },
            SystemKind::TwoBody => Model::Gravity {
                masses: spec.masses(),
                big_g: spec.param("G"),
                softening: 0.0,
            },
            SystemKind::ThreeBody => Model::Gravity {
                masses: spec.masses(),
                big_g: spec.param("G"),
                softening: spec.param("softening"),
            },
        };
        AnalyticSystem { spec, model }
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn kind(&self) -> SystemKind {
        self.spec.kind
    }

    /// World-frame planar position of every body for configuration `q`.
    pub fn body_positions(&self, q: &[f64]) -> Vec<[f64; 2]> {
        match &self.model {
            Model::MassSpring { .. } => vec![[q[0], 0.0]],
            Model::Pendulum { l, .. } => vec![[l * q[0].sin(), -l * q[0].cos()]],
            Model::DoublePendulum { l1, l2, .. } => {
                let b1 = [l1 * q[0].sin(), -l1 * q[0].cos()];
                let b2 = [b1[0] + l2 * q[1].sin(), b1[1] - l2 * q[1].cos()];
                vec![b1, b2]
            }
            Model::Gravity { masses, .. } => {
                (0..masses.len()).map(|i| [q[2 * i], q[2 * i + 1]]).collect()
            }
        }
    }
}

impl HamiltonianField for AnalyticSystem {
    fn dim(&self) -> usize {
        self.spec.phase_dim()
    }

    fn energy(&self, q: &[f64], p: &[f64]) -> f64 {
        match &self.model {
            &Model::MassSpring { m, k } => p[0] * p[0] / (2.0 * m) + 0.5 * k * q[0] * q[0],
            &Model::Pendulum { m, l, g } => {
                p[0] * p[0] / (2.0 * m * l * l) + m * g * l * (1.0 - q[0].cos())
            }
            &Model::DoublePendulum { m1, m2, l1, l2, g } => {
                let (a, d) = double_pendulum_kinetic_parts(m1, m2, l1, l2, q, p);
                a / d
                    + (m1 + m2) * g * l1 * (1.0 - q[0].cos())
                    + m2 * g * l2 * (1.0 - q[1].cos())
            }
            Model::Gravity {
                masses,
                big_g,
                softening,
            } => {
                let kinetic: f64 = masses
                    .iter()
                    .enumerate()
                    .map(|(i, m)| (p[2 * i].powi(2) + p[2 * i + 1].powi(2)) / (2.0 * m))
                    .sum();
                let mut potential = 0.0;
                for i in 0..masses.len() {
                    for j in i + 1..masses.len() {
                        let dx = q[2 * j] - q[2 * i];
                        let dy = q[2 * j + 1] - q[2 * i + 1];
                        let d = (dx * dx + dy * dy + softening * softening).sqrt();
                        potential -= big_g * masses[i] * masses[j] / d;
                    }
                }
                kinetic + potential
            }
        }
    }

    fn gradient(&self, q: &[f64], p: &[f64]) -> EnergyGradient {
        match &self.model {
            &Model::MassSpring { m, k } => EnergyGradient {
                wrt_q: vec![k * q[0]],
                wrt_p: vec![p[0] / m],
            },
            &Model::Pendulum { m, l, g } => EnergyGradient {
                wrt_q: vec![m * g * l * q[0].sin()],
                wrt_p: vec![p[0] / (m * l * l)],
            },
            &Model::DoublePendulum { m1, m2, l1, l2, g } => {
                let delta = q[0] - q[1];
                let (s, c) = delta.sin_cos();
                let (a, d) = double_pendulum_kinetic_parts(m1, m2, l1, l2, q, p);
                let da = 2.0 * m2 * l1 * l2 * p[0] * p[1] * s;
                let dd = 4.0 * m2 * m2 * l1 * l1 * l2 * l2 * s * c;
                let dt_ddelta = (da * d - a * dd) / (d * d);
                EnergyGradient {
                    wrt_q: vec![
                        dt_ddelta + (m1 + m2) * g * l1 * q[0].sin(),
                        -dt_ddelta + m2 * g * l2 * q[1].sin(),
                    ],
                    wrt_p: vec![
                        (2.0 * m2 * l2 * l2 * p[0] - 2.0 * m2 * l1 * l2 * p[1] * c) / d,
                        (2.0 * (m1 + m2) * l1 * l1 * p[1] - 2.0 * m2 * l1 * l2 * p[0] * c) / d,
                    ],
                }
            }
            Model::Gravity {
                masses,
                big_g,
                softening,
            } => {
                let n = masses.len();
                let mut wrt_q = vec![0.0; 2 * n];
                for i in 0..n {
                    for j in i + 1..n {
                        let dx = q[2 * j] - q[2 * i];
                        let dy = q[2 * j + 1] - q[2 * i + 1];
                        let d2 = dx * dx + dy * dy + softening * softening;
                        // d/dx_j of -G m_i m_j / √d2 = G m_i m_j dx / d2^{3/2}
                        let f = big_g * masses[i] * masses[j] / (d2 * d2.sqrt());
                        wrt_q[2 * j] += f * dx;
                        wrt_q[2 * j + 1] += f * dy;
                        wrt_q[2 * i] -= f * dx;
                        wrt_q[2 * i + 1] -= f * dy;
                    }
                }
                let wrt_p = (0..2 * n).map(|c| p[c] / masses[c / 2]).collect();
                EnergyGradient { wrt_q, wrt_p }
            }
        }
    }
}

/// Numerator and denominator of the double-pendulum kinetic energy `A / D`.
fn double_pendulum_kinetic_parts(
    m1: f64,
    m2: f64,
    l1: f64,
    l2: f64,
    q: &[f64],
    p: &[f64],
) -> (f64, f64) {
    let (s, c) = (q[0] - q[1]).sin_cos();
    let a = m2 * l2 * l2 * p[0] * p[0] + (m1 + m2) * l1 * l1 * p[1] * p[1]
        - 2.0 * m2 * l1 * l2 * p[0] * p[1] * c;
    let d = 2.0 * m2 * l1 * l1 * l2 * l2 * (m1 + m2 * s * s);
    (a, d)
}

/// Reduced relative-motion two-body Hamiltonian in polar coordinates
/// `(r, φ; p_r, p_φ)`: `p_r²/(2μ) + p_φ²/(2μr²) - G m₁m₂/r`. The angle is
/// absent from the energy, so `φ` is cyclic and `p_φ` conserved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoBodyPolar {
    pub reduced_mass: f64,
    pub coupling: f64,
}

impl TwoBodyPolar {
    pub fn new(spec: &SystemSpec) -> Result<Self> {
        expect_two_body(spec)?;
        let (m1, m2) = (spec.param("m1"), spec.param("m2"));
        Ok(TwoBodyPolar {
            reduced_mass: m1 * m2 / (m1 + m2),
            coupling: spec.param("G") * m1 * m2,
        })
    }
}

impl HamiltonianField for TwoBodyPolar {
    fn dim(&self) -> usize {
        2
    }

    fn energy(&self, q: &[f64], p: &[f64]) -> f64 {
        let (r, mu) = (q[0], self.reduced_mass);
        p[0] * p[0] / (2.0 * mu) + p[1] * p[1] / (2.0 * mu * r * r) - self.coupling / r
    }

    fn gradient(&self, q: &[f64], p: &[f64]) -> EnergyGradient {
        let (r, mu) = (q[0], self.reduced_mass);
        EnergyGradient {
            wrt_q: vec![-p[1] * p[1] / (mu * r * r * r) + self.coupling / (r * r), 0.0],
            wrt_p: vec![p[0] / mu, p[1] / (mu * r * r)],
        }
    }
}

fn expect_two_body(spec: &SystemSpec) -> Result<()> {
    if spec.kind != SystemKind::TwoBody {
        return Err(Error::Config(format!(
            "polar coordinates are defined for two_body, not {}",
            spec.kind
        )));
    }
    Ok(())
}

/// Maps a Cartesian two-body state to reduced relative coordinates
/// `(r, φ; p_r, p_φ)`, where `p_φ` is the angular momentum of the relative motion.
pub fn to_polar(spec: &SystemSpec, s: &PhaseState) -> Result<PhaseState> {
    expect_two_body(spec)?;
    let (m1, m2) = (spec.param("m1"), spec.param("m2"));
    let (q, p) = (s.q(), s.p());
    let dx = q[2] - q[0];
    let dy = q[3] - q[1];
    let r = dx.hypot(dy);
    if r == 0.0 {
        return Err(Error::Singularity("coincident bodies have no polar angle".into()));
    }
    let total = m1 + m2;
    let prx = (m1 * p[2] - m2 * p[0]) / total;
    let pry = (m1 * p[3] - m2 * p[1]) / total;
    let p_r = (prx * dx + pry * dy) / r;
    let p_phi = dx * pry - dy * prx;
    PhaseState::new(vec![r, dy.atan2(dx)], vec![p_r, p_phi])
}

/// Inverse of [`to_polar`]: places the pair in its centre-of-mass frame with
/// zero total momentum.
pub fn from_polar(spec: &SystemSpec, polar: &PhaseState) -> Result<PhaseState> {
    expect_two_body(spec)?;
    if polar.dim() != 2 {
        return Err(Error::Shape(format!(
            "polar two-body state has k = 2, got {}",
            polar.dim()
        )));
    }
    let (m1, m2) = (spec.param("m1"), spec.param("m2"));
    let (r, phi) = (polar.q()[0], polar.q()[1]);
    let (p_r, p_phi) = (polar.p()[0], polar.p()[1]);
    if r <= 0.0 {
        return Err(Error::Singularity(format!("radius must be positive, got {r}")));
    }
    let (s, c) = phi.sin_cos();
    let (dx, dy) = (r * c, r * s);
    let prx = p_r * c - p_phi / r * s;
    let pry = p_r * s + p_phi / r * c;
    let total = m1 + m2;
    PhaseState::new(
        vec![-m2 / total * dx, -m2 / total * dy, m1 / total * dx, m1 / total * dy],
        vec![-prx, -pry, prx, pry],
    )
}

/// Circular two-body orbit of separation `r`, rotated by `angle`, in the
/// centre-of-mass frame.
pub fn circular_orbit(spec: &SystemSpec, r: f64, angle: f64) -> Result<PhaseState> {
    orbit_at_apoapsis(spec, r, angle, 1.0)
}

/// Bound orbit starting at separation `r` with tangential speed
/// `speed_fraction` times the circular speed.
fn orbit_at_apoapsis(spec: &SystemSpec, r: f64, angle: f64, speed_fraction: f64) -> Result<PhaseState> {
    expect_two_body(spec)?;
    let (m1, m2) = (spec.param("m1"), spec.param("m2"));
    let mu = m1 * m2 / (m1 + m2);
    let v = speed_fraction * (spec.param("G") * (m1 + m2) / r).sqrt();
    // p_φ = μ r v
    from_polar(spec, &PhaseState::new(vec![r, angle], vec![0.0, mu * r * v])?)
}

/// Seeded initial-condition sampler. Unset ranges take per-kind defaults
/// (see [`InitSampler::resolved_energy_range`] and
/// [`InitSampler::resolved_radius_range`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSampler {
    pub seed: u64,
    /// Total-energy window for the spring and pendulum systems.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy_range: Option<(f64, f64)>,
    /// Initial separation window (two-body) or distance from the centre
    /// (three-body).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius_range: Option<(f64, f64)>,
    /// Minimum initial pairwise separation for three-body states.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_separation: Option<f64>,
}

impl InitSampler {
    pub fn new(seed: u64) -> Self {
        InitSampler {
            seed,
            energy_range: None,
            radius_range: None,
            min_separation: None,
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        InitSampler { seed, ..self.clone() }
    }

    pub fn resolved_energy_range(&self, kind: SystemKind) -> (f64, f64) {
        self.energy_range.unwrap_or(match kind {
            SystemKind::MassSpring => (0.1, 1.0),
            SystemKind::Pendulum => (0.5, 1.5),
            SystemKind::DoublePendulum => (0.5, 2.0),
            SystemKind::TwoBody | SystemKind::ThreeBody => (f64::NEG_INFINITY, 0.0),
        })
    }

    pub fn resolved_radius_range(&self, kind: SystemKind) -> (f64, f64) {
        self.radius_range.unwrap_or(match kind {
            SystemKind::ThreeBody => (0.6, 1.2),
            _ => (0.8, 1.4),
        })
    }

    pub fn resolved_min_separation(&self) -> f64 {
        self.min_separation.unwrap_or(0.5)
    }

    fn validate(&self, kind: SystemKind) -> Result<()> {
        let (lo, hi) = self.resolved_energy_range(kind);
        if lo.is_nan() || hi.is_nan() || lo >= hi {
            return Err(Error::Config(format!("energy range ({lo}, {hi}) is empty")));
        }
        let (lo, hi) = self.resolved_radius_range(kind);
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::Config(format!("radius range ({lo}, {hi}) is invalid")));
        }
        if !(self.resolved_min_separation() > 0.0) {
            return Err(Error::Config("min_separation must be positive".into()));
        }
        Ok(())
    }
}

/// Draws an initial state for `spec`; deterministic in `(spec, sampler)`.
pub fn sample_initial(spec: &SystemSpec, sampler: &InitSampler) -> Result<PhaseState> {
    sampler.validate(spec.kind)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let system = AnalyticSystem::new(spec.clone());
    let (e_lo, e_hi) = sampler.resolved_energy_range(spec.kind);
    let (r_lo, r_hi) = sampler.resolved_radius_range(spec.kind);

    for _ in 0..MAX_SAMPLING_ATTEMPTS {
        let candidate = match spec.kind {
            SystemKind::MassSpring => {
                let (m, k) = (spec.param("m"), spec.param("k"));
                let e = rng.random_range(e_lo..e_hi);
                let theta = rng.random_range(0.0..2.0 * PI);
                PhaseState::new(
                    vec![(2.0 * e / k).sqrt() * theta.cos()],
                    vec![(2.0 * m * e).sqrt() * theta.sin()],
                )?
            }
            SystemKind::Pendulum => {
                let (m, l, g) = (spec.param("m"), spec.param("l"), spec.param("g"));
                let e = rng.random_range(e_lo..e_hi);
                let depth = m * g * l;
                let q_max = if e >= 2.0 * depth {
                    PI
                } else {
                    (1.0 - e / depth).acos()
                };
                let q = rng.random_range(-q_max..=q_max);
                let kinetic = (e - depth * (1.0 - q.cos())).max(0.0);
                let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                PhaseState::new(vec![q], vec![sign * (2.0 * m * l * l * kinetic).sqrt()])?
            }
            SystemKind::DoublePendulum => PhaseState::new(
                vec![
                    rng.random_range(-PI / 2.0..PI / 2.0),
                    rng.random_range(-PI / 2.0..PI / 2.0),
                ],
                vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
            )?,
            SystemKind::TwoBody => {
                let r = rng.random_range(r_lo..=r_hi);
                let angle = rng.random_range(-PI..PI);
                let fraction = rng.random_range(0.7..0.95);
                orbit_at_apoapsis(spec, r, angle, fraction)?
            }
            SystemKind::ThreeBody => sample_three_body(spec, &mut rng, (r_lo, r_hi))?,
        };
        let e = system.energy_at(&candidate);
        if !e.is_finite() || e < e_lo || e > e_hi {
            continue;
        }
        if spec.kind == SystemKind::ThreeBody
            && min_pairwise_distance(candidate.q()) < sampler.resolved_min_separation()
        {
            continue;
        }
        return Ok(candidate);
    }
    Err(Error::Sampling {
        attempts: MAX_SAMPLING_ATTEMPTS,
        detail: format!("no {} state satisfied the configured ranges", spec.kind),
    })
}

fn sample_three_body(
    spec: &SystemSpec,
    rng: &mut ChaCha8Rng,
    (r_lo, r_hi): (f64, f64),
) -> Result<PhaseState> {
    let masses = spec.masses();
    let total: f64 = masses.iter().sum();
    let mut pos = [[0.0f64; 2]; 3];
    for b in &mut pos {
        let rho = rng.random_range(r_lo..=r_hi);
        let a = rng.random_range(-PI..PI);
        *b = [rho * a.cos(), rho * a.sin()];
    }
    let com = centre(&pos, &masses, total);
    for b in &mut pos {
        b[0] -= com[0];
        b[1] -= com[1];
    }
    // Rigid rotation at a fraction of the Keplerian rate, plus jitter.
    let mean_radius = pos.iter().map(|b| b[0].hypot(b[1])).sum::<f64>() / 3.0;
    let omega = 0.5 * (spec.param("G") * total / mean_radius.max(1e-3).powi(3)).sqrt();
    let mut vel = [[0.0f64; 2]; 3];
    for (v, b) in vel.iter_mut().zip(&pos) {
        *v = [
            -omega * b[1] + rng.random_range(-0.1..0.1),
            omega * b[0] + rng.random_range(-0.1..0.1),
        ];
    }
    let vcom = centre(&vel, &masses, total);
    let mut q = Vec::with_capacity(6);
    let mut p = Vec::with_capacity(6);
    for i in 0..3 {
        q.extend_from_slice(&pos[i]);
        p.push(masses[i] * (vel[i][0] - vcom[0]));
        p.push(masses[i] * (vel[i][1] - vcom[1]));
    }
    PhaseState::new(q, p)
}

fn centre(points: &[[f64; 2]; 3], masses: &[f64], total: f64) -> [f64; 2] {
    let mut c = [0.0; 2];
    for (b, m) in points.iter().zip(masses) {
        c[0] += m * b[0] / total;
        c[1] += m * b[1] / total;
    }
    c
}

/// Smallest distance between any two bodies of a planar Cartesian configuration.
pub fn min_pairwise_distance(q: &[f64]) -> f64 {
    let n = q.len() / 2;
    let mut best = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            best = best.min((q[2 * j] - q[2 * i]).hypot(q[2 * j + 1] - q[2 * i + 1]));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_state(kind: SystemKind, rng: &mut ChaCha8Rng) -> PhaseState {
        let k = kind.phase_dim();
        loop {
            let q: Vec<f64> = (0..k).map(|_| rng.random_range(-1.5..1.5)).collect();
            let p: Vec<f64> = (0..k).map(|_| rng.random_range(-1.5..1.5)).collect();
            // keep gravitating bodies apart so finite differences stay well conditioned
            if k >= 4 && min_pairwise_distance(&q) < 0.3 {
                continue;
            }
            return PhaseState::new(q, p).unwrap();
        }
    }

    /// Central differences with a per-coordinate step `1e-6·max(1,|x|)`.
    fn fd_gradient(field: &dyn HamiltonianField, s: &PhaseState) -> Vec<f64> {
        let y = s.concat();
        let k = s.dim();
        (0..y.len())
            .map(|i| {
                let h = 1e-6 * y[i].abs().max(1.0);
                let mut plus = y.clone();
                let mut minus = y.clone();
                plus[i] += h;
                minus[i] -= h;
                (field.energy(&plus[..k], &plus[k..]) - field.energy(&minus[..k], &minus[k..]))
                    / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for kind in SystemKind::ALL {
            let sys = AnalyticSystem::new(SystemSpec::with_defaults(kind));
            for _ in 0..100 {
                let s = random_state(kind, &mut rng);
                let g = sys.gradient(s.q(), s.p());
                let analytic: Vec<f64> = g.wrt_q.iter().chain(&g.wrt_p).copied().collect();
                for (a, n) in analytic.iter().zip(fd_gradient(&sys, &s)) {
                    assert!(rel_err(*a, n) <= 1e-5, "{kind}: analytic {a} vs fd {n}");
                }
            }
        }
    }

    #[test]
    fn polar_gradient_matches_finite_differences() {
        let field = TwoBodyPolar::new(&SystemSpec::with_defaults(SystemKind::TwoBody)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let s = PhaseState::new(
                vec![rng.random_range(0.5..2.0), rng.random_range(-PI..PI)],
                vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            )
            .unwrap();
            let g = field.gradient(s.q(), s.p());
            let analytic: Vec<f64> = g.wrt_q.iter().chain(&g.wrt_p).copied().collect();
            for (a, n) in analytic.iter().zip(fd_gradient(&field, &s)) {
                assert!(rel_err(*a, n) <= 1e-5);
            }
        }
    }

    #[test]
    fn reference_energies() {
        let spring = make_system(SystemKind::MassSpring, BTreeMap::new()).unwrap();
        assert_eq!(spring.energy(&[0.0], &[0.0]), 0.0);
        let pendulum = make_system(SystemKind::Pendulum, BTreeMap::new()).unwrap();
        assert!((pendulum.energy(&[PI], &[0.0]) - 2.0).abs() < 1e-15);
        let g = pendulum.gradient(&[PI / 2.0], &[0.5]);
        assert!((g.wrt_p[0] - 0.5).abs() < 1e-15);
        assert!((g.wrt_q[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn circular_orbit_obeys_virial_energy() {
        let spec = SystemSpec::with_defaults(SystemKind::TwoBody);
        let sys = AnalyticSystem::new(spec.clone());
        for r in [0.5, 1.0, 2.0] {
            let s = circular_orbit(&spec, r, 0.3).unwrap();
            // brute force: kinetic + potential from raw coordinates
            let (q, p) = (s.q(), s.p());
            let kinetic = 0.5 * (p[0] * p[0] + p[1] * p[1] + p[2] * p[2] + p[3] * p[3]);
            let d = (q[2] - q[0]).hypot(q[3] - q[1]);
            assert!((d - r).abs() < 1e-12);
            let brute = kinetic - 1.0 / d;
            assert!((brute - (-1.0 / (2.0 * r))).abs() < 1e-12);
            assert!((sys.energy_at(&s) - brute).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut params = BTreeMap::new();
        params.insert("m".to_string(), 0.0);
        assert!(matches!(
            make_system(SystemKind::Pendulum, params),
            Err(Error::Config(_))
        ));
        let mut params = BTreeMap::new();
        params.insert("mass".to_string(), 1.0);
        assert!(make_system(SystemKind::Pendulum, params).is_err());
        assert!("quadruple_pendulum".parse::<SystemKind>().is_err());
        assert_eq!("two-body".parse::<SystemKind>().unwrap(), SystemKind::TwoBody);
    }

    #[test]
    fn sampling_is_deterministic() {
        for kind in SystemKind::ALL {
            let spec = SystemSpec::with_defaults(kind);
            let a = sample_initial(&spec, &InitSampler::new(42)).unwrap();
            let b = sample_initial(&spec, &InitSampler::new(42)).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.dim(), kind.phase_dim());
        }
    }

    #[test]
    fn pendulum_samples_stay_in_energy_window() {
        let spec = SystemSpec::with_defaults(SystemKind::Pendulum);
        let sys = AnalyticSystem::new(spec.clone());
        let mut sampler = InitSampler::new(0);
        sampler.energy_range = Some((0.5, 1.5));
        for seed in 0..1000 {
            let s = sample_initial(&spec, &sampler.with_seed(seed)).unwrap();
            let e = sys.energy_at(&s);
            assert!((0.5..=1.5).contains(&e), "seed {seed}: energy {e}");
        }
    }

    #[test]
    fn three_body_respects_separation_floor() {
        let mut params = BTreeMap::new();
        params.insert("softening".to_string(), 0.1);
        let spec = SystemSpec::new(SystemKind::ThreeBody, params).unwrap();
        let mut sampler = InitSampler::new(0);
        sampler.min_separation = Some(0.6);
        for seed in 0..200 {
            let s = sample_initial(&spec, &sampler.with_seed(seed)).unwrap();
            assert!(min_pairwise_distance(s.q()) >= 0.6);
            let total_px: f64 = s.p().iter().step_by(2).sum();
            assert!(total_px.abs() < 1e-12);
        }
    }

    #[test]
    fn impossible_window_is_a_sampling_error() {
        let spec = SystemSpec::with_defaults(SystemKind::DoublePendulum);
        let mut sampler = InitSampler::new(1);
        sampler.energy_range = Some((1e6, 1e6 + 1.0));
        assert!(matches!(
            sample_initial(&spec, &sampler),
            Err(Error::Sampling { attempts: 10_000, .. })
        ));
    }

    #[test]
    fn polar_round_trips() {
        let spec = SystemSpec::with_defaults(SystemKind::TwoBody);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let polar = PhaseState::new(
                vec![rng.random_range(0.2..3.0), rng.random_range(-3.1..3.1)],
                vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
            )
            .unwrap();
            let back = to_polar(&spec, &from_polar(&spec, &polar).unwrap()).unwrap();
            assert!(back.distance(&polar) < 1e-10);
        }
    }

    #[test]
    fn radial_infall_has_no_angular_momentum() {
        let spec = SystemSpec::with_defaults(SystemKind::TwoBody);
        let s = PhaseState::new(vec![-0.5, 0.0, 0.5, 0.0], vec![0.3, 0.0, -0.3, 0.0]).unwrap();
        let polar = to_polar(&spec, &s).unwrap();
        assert_eq!(polar.p()[1], 0.0);
        let coincident = PhaseState::new(vec![1.0, 1.0, 1.0, 1.0], vec![0.0; 4]).unwrap();
        assert!(matches!(to_polar(&spec, &coincident), Err(Error::Singularity(_))));
        let pendulum = SystemSpec::with_defaults(SystemKind::Pendulum);
        assert!(to_polar(&pendulum, &s).is_err());
    }

    #[test]
    fn body_positions_follow_geometry() {
        let dp = AnalyticSystem::new(SystemSpec::with_defaults(SystemKind::DoublePendulum));
        let b = dp.body_positions(&[0.0, PI / 2.0]);
        assert!((b[0][1] + 1.0).abs() < 1e-15);
        assert!((b[1][0] - 1.0).abs() < 1e-15 && (b[1][1] + 1.0).abs() < 1e-12);
    }
}
