//! Fixed-step integrators for Hamiltonian fields.
//!
//! Leapfrog is kick–drift–kick:
//!
//! ```text
//! p½ = p  - dt/2 · ∂E/∂q(q,  p)
//! q' = q  + dt   · ∂E/∂p(q,  p½)
//! p' = p½ - dt/2 · ∂E/∂q(q', p½)
//! ```
//!
//! For separable energies this is the symplectic Störmer–Verlet scheme. For
//! non-separable ones (double pendulum, learned networks) it is only a
//! semi-explicit approximation; symplecticity and reversibility hold only in
//! the separable case.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phase::{check_dim, time_derivative, HamiltonianField, PhaseState, Trajectory};

pub const DEFAULT_DT: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    Leapfrog,
    Euler,
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default)]
    pub scheme: Scheme,
}

impl IntegratorConfig {
    pub fn leapfrog(dt: f64, n_steps: usize) -> Self {
        IntegratorConfig {
            dt,
            n_steps,
            scheme: Scheme::Leapfrog,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        Ok(())
    }
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig::leapfrog(DEFAULT_DT, 0)
    }
}

fn finite_or(stage: &str, v: &[f64]) -> Result<()> {
    match v.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::numerical(stage, format!("non-finite value at component {i}"))),
        None => Ok(()),
    }
}

/// One kick–drift–kick step. `dt` may be zero or negative.
pub fn leapfrog_step(field: &dyn HamiltonianField, s: &PhaseState, dt: f64) -> Result<PhaseState> {
    check_dim(field, s.dim())?;
    let (q, p) = (s.q(), s.p());
    let half = 0.5 * dt;

    let g = field.gradient(q, p);
    let p_half: Vec<f64> = p.iter().zip(&g.wrt_q).map(|(p, d)| p - half * d).collect();
    finite_or("kick1", &p_half)?;

    let g = field.gradient(q, &p_half);
    let q_new: Vec<f64> = q.iter().zip(&g.wrt_p).map(|(q, d)| q + dt * d).collect();
    finite_or("drift", &q_new)?;

    let g = field.gradient(&q_new, &p_half);
    let p_new: Vec<f64> = p_half.iter().zip(&g.wrt_q).map(|(p, d)| p - half * d).collect();
    finite_or("kick2", &p_new)?;

    PhaseState::new(q_new, p_new)
}

/// Explicit Euler step (baseline).
pub fn euler_step(field: &dyn HamiltonianField, s: &PhaseState, dt: f64) -> Result<PhaseState> {
    let d = time_derivative(field, s)?;
    let q: Vec<f64> = s.q().iter().zip(&d.dq).map(|(q, v)| q + dt * v).collect();
    let p: Vec<f64> = s.p().iter().zip(&d.dp).map(|(p, v)| p + dt * v).collect();
    finite_or("euler", &q)?;
    finite_or("euler", &p)?;
    PhaseState::new(q, p)
}

/// Classical fourth-order Runge–Kutta step (baseline).
pub fn rk4_step(field: &dyn HamiltonianField, s: &PhaseState, dt: f64) -> Result<PhaseState> {
    check_dim(field, s.dim())?;
    let y = s.concat();
    let k = s.dim();
    let rhs = |y: &[f64]| -> Result<Vec<f64>> {
        let g = field.gradient(&y[..k], &y[k..]);
        let mut out = g.wrt_p;
        out.extend(g.wrt_q.iter().map(|v| -v));
        finite_or("rk4", &out)?;
        Ok(out)
    };
    let axpy = |a: f64, x: &[f64]| -> Vec<f64> { y.iter().zip(x).map(|(y, x)| y + a * x).collect() };
    let k1 = rhs(&y)?;
    let k2 = rhs(&axpy(0.5 * dt, &k1))?;
    let k3 = rhs(&axpy(0.5 * dt, &k2))?;
    let k4 = rhs(&axpy(dt, &k3))?;
    let next: Vec<f64> = (0..y.len())
        .map(|i| y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect();
    finite_or("rk4", &next)?;
    PhaseState::from_concat(&next)
}

pub fn step(field: &dyn HamiltonianField, s: &PhaseState, dt: f64, scheme: Scheme) -> Result<PhaseState> {
    match scheme {
        Scheme::Leapfrog => leapfrog_step(field, s, dt),
        Scheme::Euler => euler_step(field, s, dt),
        Scheme::Rk4 => rk4_step(field, s, dt),
    }
}

fn integrate(field: &dyn HamiltonianField, s0: &PhaseState, cfg: &IntegratorConfig, dt: f64) -> Result<Trajectory> {
    cfg.validate()?;
    check_dim(field, s0.dim())?;
    let mut states = Vec::with_capacity(cfg.n_steps + 1);
    states.push(s0.clone());
    for j in 0..cfg.n_steps {
        let next = step(field, &states[j], dt, cfg.scheme).map_err(|e| e.within(format!("step {j}")))?;
        states.push(next);
    }
    Ok(Trajectory::new(cfg.dt, states))
}

/// Integrates `n_steps` forward from `s0`; the result has `n_steps + 1` states.
pub fn rollout(field: &dyn HamiltonianField, s0: &PhaseState, cfg: &IntegratorConfig) -> Result<Trajectory> {
    integrate(field, s0, cfg, cfg.dt)
}

/// Integrates backward in time from `s_end` with step `-dt`.
///
/// States are listed in integration order, so `states[j]` lies `j·dt` before
/// `s_end`; the timestamps record elapsed integration time.
pub fn reverse_rollout(field: &dyn HamiltonianField, s_end: &PhaseState, cfg: &IntegratorConfig) -> Result<Trajectory> {
    integrate(field, s_end, cfg, -cfg.dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phase::EnergyGradient;

    struct Quadratic {
        stiffness: f64,
    }

    impl HamiltonianField for Quadratic {
        fn dim(&self) -> usize {
            1
        }
        fn energy(&self, q: &[f64], p: &[f64]) -> f64 {
            0.5 * (self.stiffness * q[0] * q[0] + p[0] * p[0])
        }
        fn gradient(&self, q: &[f64], p: &[f64]) -> EnergyGradient {
            EnergyGradient {
                wrt_q: vec![self.stiffness * q[0]],
                wrt_p: vec![p[0]],
            }
        }
    }

    struct Blowup;

    impl HamiltonianField for Blowup {
        fn dim(&self) -> usize {
            1
        }
        fn energy(&self, _: &[f64], _: &[f64]) -> f64 {
            0.0
        }
        fn gradient(&self, q: &[f64], p: &[f64]) -> EnergyGradient {
            EnergyGradient {
                wrt_q: vec![if q[0] > 0.5 { f64::INFINITY } else { 0.0 }],
                wrt_p: vec![p[0]],
            }
        }
    }

    fn state(q: f64, p: f64) -> PhaseState {
        PhaseState::new(vec![q], vec![p]).unwrap()
    }

    #[test]
    fn hand_computed_leapfrog_step() {
        let osc = Quadratic { stiffness: 1.0 };
        let next = leapfrog_step(&osc, &state(1.0, 0.0), 0.05).unwrap();
        assert!((next.q()[0] - 0.99875).abs() < 1e-15);
        assert!((next.p()[0] + 0.04996875).abs() < 1e-15);
    }

    #[test]
    fn zero_step_and_free_particle() {
        let osc = Quadratic { stiffness: 1.0 };
        let s = state(0.3, -0.7);
        assert_eq!(leapfrog_step(&osc, &s, 0.0).unwrap(), s);
        let free = Quadratic { stiffness: 0.0 };
        let next = leapfrog_step(&free, &state(0.0, 1.0), 0.05).unwrap();
        assert_eq!((next.q()[0], next.p()[0]), (0.05, 1.0));
    }

    #[test]
    fn rollout_shapes_and_errors() {
        let osc = Quadratic { stiffness: 1.0 };
        let s0 = state(1.0, 0.0);
        let tr = rollout(&osc, &s0, &IntegratorConfig::leapfrog(0.05, 0)).unwrap();
        assert_eq!(tr.states, vec![s0.clone()]);
        let bad = IntegratorConfig::leapfrog(-1.0, 3);
        assert!(matches!(rollout(&osc, &s0, &bad), Err(Error::Config(_))));

        let err = rollout(&Blowup, &state(0.0, 1.0), &IntegratorConfig::leapfrog(0.1, 20)).unwrap_err();
        match err {
            Error::Numerical { location, .. } => {
                assert!(location.starts_with("step 5"), "{location}");
                assert!(location.ends_with("kick2"), "{location}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn leapfrog_tracks_closed_form() {
        let osc = Quadratic { stiffness: 1.0 };
        let tr = rollout(&osc, &state(1.0, 0.0), &IntegratorConfig::leapfrog(0.05, 512)).unwrap();
        let t: f64 = 512.0 * 0.05;
        let end = tr.last().unwrap();
        assert!((end.q()[0] - t.cos()).abs() < 2e-2);
        assert!((end.p()[0] + t.sin()).abs() < 2e-2);
    }

    #[test]
    fn local_error_is_third_order() {
        let osc = Quadratic { stiffness: 1.0 };
        let err = |dt: f64| {
            let s = leapfrog_step(&osc, &state(1.0, 0.0), dt).unwrap();
            state(dt.cos(), -dt.sin()).distance(&s)
        };
        let ratio = err(0.05) / err(0.025);
        assert!((6.0..=10.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn reverse_retraces_forward() {
        let osc = Quadratic { stiffness: 2.0 };
        let cfg = IntegratorConfig::leapfrog(0.05, 100);
        let fwd = rollout(&osc, &state(0.4, 0.9), &cfg).unwrap();
        let back = reverse_rollout(&osc, fwd.last().unwrap(), &cfg).unwrap();
        for (a, b) in fwd.states.iter().zip(back.states.iter().rev()) {
            assert!(a.distance(b) < 1e-9);
        }
        let again = rollout(&osc, back.last().unwrap(), &cfg).unwrap();
        for (a, b) in fwd.states.iter().zip(&again.states) {
            assert!(a.distance(b) < 1e-9);
        }
        let single = reverse_rollout(&osc, &state(1.0, 1.0), &IntegratorConfig::leapfrog(0.05, 0)).unwrap();
        assert_eq!(single.len(), 1);
    }

    #[test]
    fn rk4_is_more_accurate_than_euler() {
        let osc = Quadratic { stiffness: 1.0 };
        let exact = state(0.5f64.cos(), -0.5f64.sin());
        let run = |scheme| {
            let cfg = IntegratorConfig { dt: 0.05, n_steps: 10, scheme };
            rollout(&osc, &state(1.0, 0.0), &cfg).unwrap().last().unwrap().distance(&exact)
        };
        let (e, r) = (run(Scheme::Euler), run(Scheme::Rk4));
        assert!(r < 1e-6 && e > 1e-3, "rk4 {r}, euler {e}");
    }
}
