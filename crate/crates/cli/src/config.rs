//! Versioned JSON configuration files and the `simulate` output format.

use std::path::PathBuf;

use hamogen::dataset::DatasetSpec;
use hamogen::eval::EnergyReport;
use hamogen::hgan::{GanArchitecture, GanTrainConfig};
use hamogen::hnn::HnnTrainConfig;
use hamogen::integrators::IntegratorConfig;
use hamogen::systems::SystemSpec;
use hamogen::Trajectory;
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub version: u32,
    pub dataset: DatasetSpec,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HnnConfig {
    pub version: u32,
    #[serde(default)]
    pub train: HnnTrainConfig,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanConfig {
    pub version: u32,
    #[serde(default)]
    pub arch: GanArchitecture,
    #[serde(default)]
    pub train: GanTrainConfig,
    /// Seed for network initialization; `train.seed` drives the batches.
    #[serde(default)]
    pub model_seed: u64,
    /// Directory of a trained Hamiltonian checkpoint used as the starting point.
    #[serde(default)]
    pub init_hnn: Option<PathBuf>,
    /// Export a sample video every this many steps (0 disables).
    #[serde(default = "default_sample_every")]
    pub sample_every: usize,
    /// Print metrics every this many steps (0 disables).
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

fn default_sample_every() -> usize {
    100
}

fn default_log_every() -> usize {
    50
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationOutput {
    pub version: u32,
    pub system: SystemSpec,
    pub seed: u64,
    pub integrator: IntegratorConfig,
    pub trajectory: Trajectory,
    pub energy: EnergyReport,
}
