//! Hamiltonian generative dynamics at desk scale.
//!
//! The crate covers the whole video-generation pipeline: analytic toy-physics
//! systems and a renderer that turns their trajectories into frame datasets;
//! a learned Hamiltonian motion model integrated with leapfrog; a map from
//! Gaussian motion noise to an initial phase-space state; the cyclic-coordinate
//! sparsity penalty; and a motion/content adversarial trainer.

pub mod autodiff;
pub mod config_map;
pub mod cyclic;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod hgan;
pub mod hnn;
pub mod integrators;
pub mod phase;
pub mod render;
pub mod systems;

pub use error::{Error, Result};
pub use phase::{time_derivative, EnergyGradient, HamiltonianField, PhaseDerivative, PhaseState, Trajectory};
