//! Map from Gaussian motion noise to an initial phase-space state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Activation, Mlp, Tape, Var};
use crate::error::{Error, Result};
use crate::hnn::TapeState;
use crate::phase::PhaseState;

pub const DEFAULT_MOTION_DIM: usize = 10;
pub const DEFAULT_MAP_HIDDEN: usize = 64;

/// Two affine stages `n → hidden → 2k` with a tanh between them. The output
/// is split into `(q, p)` halves.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigMap {
    net: Mlp,
}

impl ConfigMap {
    pub fn new(motion_dim: usize, k: usize, hidden: usize, seed: u64) -> Result<Self> {
        Self::from_net(Mlp::new(&[motion_dim, hidden, 2 * k], Activation::Tanh, seed)?)
    }

    pub fn from_net(net: Mlp) -> Result<Self> {
        if net.widths().len() != 3 {
            return Err(Error::Shape(format!(
                "configuration map has exactly two affine stages, got widths {:?}",
                net.widths()
            )));
        }
        if !net.d_out().is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "configuration map output must have even width, got {}",
                net.d_out()
            )));
        }
        Ok(ConfigMap { net })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn motion_dim(&self) -> usize {
        self.net.d_in()
    }

    pub fn k(&self) -> usize {
        self.net.d_out() / 2
    }

    pub fn map_noise(&self, z_m: &[f64]) -> Result<PhaseState> {
        PhaseState::from_concat(&self.net.forward(z_m)?)
    }

    /// Records `f(z_m)` on the tape with parameters `params`.
    pub fn map_tape(&self, tape: &mut Tape, params: &[Var], z_m: &[f64]) -> Result<TapeState> {
        let mut q = self.net.forward_tape_const(tape, params, z_m)?;
        let p = q.split_off(self.k());
        Ok(TapeState { q, p })
    }

    /// Upper bound on the Lipschitz constant: the product of the weight
    /// matrices' spectral norms (tanh is 1-Lipschitz).
    pub fn lipschitz_bound(&self) -> f64 {
        self.net.operator_norms().iter().product()
    }
}

pub fn map_noise(f: &ConfigMap, z_m: &[f64]) -> Result<PhaseState> {
    f.map_noise(z_m)
}

/// `n` i.i.d. standard normal components drawn from `rng`.
pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Standard normal motion noise, deterministic in `seed`.
pub fn sample_motion_noise(n: usize, seed: u64) -> Vec<f64> {
    gaussian_vector(&mut ChaCha8Rng::seed_from_u64(seed), n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_map_gives_origin() {
        let f = ConfigMap::from_net(Mlp::zeros(&[10, 64, 4], Activation::Tanh).unwrap()).unwrap();
        let s = f.map_noise(&sample_motion_noise(10, 3)).unwrap();
        assert_eq!(s, PhaseState::zeros(2).unwrap());
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(ConfigMap::from_net(Mlp::zeros(&[4, 3], Activation::Tanh).unwrap()).is_err());
        assert!(ConfigMap::from_net(Mlp::zeros(&[4, 3, 3], Activation::Tanh).unwrap()).is_err());
        let f = ConfigMap::new(10, 1, 8, 0).unwrap();
        assert!(matches!(f.map_noise(&[0.0; 3]), Err(Error::Shape(_))));
    }

    #[test]
    fn mapping_is_deterministic() {
        let f = ConfigMap::new(10, 2, 64, 7).unwrap();
        let z = sample_motion_noise(10, 11);
        assert_eq!(z, sample_motion_noise(10, 11));
        let a = f.map_noise(&z).unwrap();
        let b = ConfigMap::new(10, 2, 64, 7).unwrap().map_noise(&z).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn noise_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| gaussian_vector(&mut rng, 3)).collect();
        for c in 0..3 {
            let mean = draws.iter().map(|d| d[c]).sum::<f64>() / n as f64;
            let var = draws.iter().map(|d| (d[c] - mean).powi(2)).sum::<f64>() / n as f64;
            assert!(mean.abs() < 0.02, "mean {mean}");
            assert!((0.97..1.03).contains(&var), "variance {var}");
        }
    }

    #[test]
    fn map_is_lipschitz() {
        let f = ConfigMap::new(10, 2, 32, 3).unwrap();
        let bound = f.lipschitz_bound();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let z = gaussian_vector(&mut rng, 10);
            let delta: Vec<f64> = gaussian_vector(&mut rng, 10).iter().map(|d| 1e-3 * d).collect();
            let z2: Vec<f64> = z.iter().zip(&delta).map(|(a, b)| a + b).collect();
            let gap = f.map_noise(&z).unwrap().distance(&f.map_noise(&z2).unwrap());
            let norm = delta.iter().map(|d| d * d).sum::<f64>().sqrt();
            assert!(gap <= bound * norm * (1.0 + 1e-12));
        }
    }

    #[test]
    fn tape_map_matches_plain_map() {
        let f = ConfigMap::new(6, 2, 16, 5).unwrap();
        let z = sample_motion_noise(6, 2);
        let mut tape = Tape::new();
        let params = f.net().register(&mut tape);
        let s = f.map_tape(&mut tape, &params, &z).unwrap();
        assert_eq!(s.values(&tape).unwrap(), f.map_noise(&z).unwrap());
    }
}
