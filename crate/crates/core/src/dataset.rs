//! Deterministic on-disk video datasets of rendered toy-physics trajectories.
//!
//! Layout: one `traj_XXXXX.hgf` frame tensor per trajectory plus
//! `manifest.json`, written last through a rename so its presence marks a
//! complete dataset.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use walkdir::WalkDir;

use crate::error::{Error, Result};
use crate::integrators::{rollout, IntegratorConfig, DEFAULT_DT};
use crate::phase::PhaseState;
use crate::render::{hue_to_rgb, render_frame, ColorMode, FrameTensor, RenderConfig};
use crate::systems::{sample_initial, AnalyticSystem, InitSampler, SystemSpec};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_COUNT: usize = 512;
pub const DEFAULT_FRAMES: usize = 64;

/// Everything that determines a dataset's bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub system: SystemSpec,
    /// Initial-condition sampler; its seed is the base seed, trajectory `i`
    /// uses `seed + i`.
    pub sampler: InitSampler,
    #[serde(default)]
    pub render: RenderConfig,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default = "default_frames")]
    pub frames: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Physical parameters drawn uniformly per trajectory instead of taken
    /// from `system`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub param_ranges: BTreeMap<String, (f64, f64)>,
}

fn default_count() -> usize {
    DEFAULT_COUNT
}

fn default_frames() -> usize {
    DEFAULT_FRAMES
}

fn default_dt() -> f64 {
    DEFAULT_DT
}

impl DatasetSpec {
    pub fn new(system: SystemSpec, base_seed: u64) -> Self {
        DatasetSpec {
            system,
            sampler: InitSampler::new(base_seed),
            render: RenderConfig::default(),
            count: DEFAULT_COUNT,
            frames: DEFAULT_FRAMES,
            dt: DEFAULT_DT,
            param_ranges: BTreeMap::new(),
        }
    }

    pub fn base_seed(&self) -> u64 {
        self.sampler.seed
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || self.frames == 0 {
            return Err(Error::Config("count and frames must be at least 1".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        self.render.validate()?;
        for (name, &(lo, hi)) in &self.param_ranges {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::Config(format!("range for {name} must satisfy 0 < lo <= hi, got ({lo}, {hi})")));
            }
        }
        // Rejects parameter names the system does not have.
        self.trajectory_system(&mut ChaCha8Rng::seed_from_u64(0))?;
        Ok(())
    }

    fn trajectory_system(&self, rng: &mut ChaCha8Rng) -> Result<SystemSpec> {
        if self.param_ranges.is_empty() {
            return Ok(self.system.clone());
        }
        let mut params = self.system.params.clone();
        for (name, &(lo, hi)) in &self.param_ranges {
            let v = if hi > lo { rng.random_range(lo..hi) } else { lo };
            params.insert(name.clone(), v);
        }
        SystemSpec::new(self.system.kind, params)
    }

    pub fn frame_times(&self) -> Vec<f64> {
        (0..self.frames).map(|j| j as f64 * self.dt).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrajectoryStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryEntry {
    pub index: usize,
    pub seed: u64,
    pub status: TrajectoryStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sha256: Option<String>,
    pub color: [f32; 3],
    pub params: BTreeMap<String, f64>,
    pub initial_state: PhaseState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub spec: DatasetSpec,
    pub frame_times: Vec<f64>,
    pub completed: usize,
    pub failed: usize,
    pub trajectories: Vec<TrajectoryEntry>,
}

pub fn trajectory_file_name(index: usize) -> String {
    format!("traj_{index:05}.hgf")
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    hex::encode(digest)
}

fn io_at(index: usize) -> impl Fn(std::io::Error) -> Error {
    move |source| Error::Io {
        trajectory: Some(index),
        source,
    }
}

fn generate_one(spec: &DatasetSpec, index: usize, out_dir: &Path) -> Result<TrajectoryEntry> {
    let seed = spec.base_seed().wrapping_add(index as u64);
    // A separate stream keeps colour and parameter draws independent of the
    // initial-condition sampler, which seeds its own generator with `seed`.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let hue: f64 = rng.random();
    let color = match spec.render.color_mode {
        ColorMode::ConstantGray => [1.0; 3],
        ColorMode::ConstantColor => spec.render.body_color,
        ColorMode::VariedColor => hue_to_rgb(hue),
    };
    let system_spec = spec.trajectory_system(&mut rng)?;
    let s0 = sample_initial(&system_spec, &spec.sampler.with_seed(seed))?;
    let mut entry = TrajectoryEntry {
        index,
        seed,
        status: TrajectoryStatus::Ok,
        file: None,
        sha256: None,
        color,
        params: system_spec.params.clone(),
        initial_state: s0.clone(),
        error: None,
    };
    let system = AnalyticSystem::new(system_spec);
    let traj = match rollout(&system, &s0, &IntegratorConfig::leapfrog(spec.dt, spec.frames - 1)) {
        Ok(t) => t,
        Err(e @ Error::Numerical { .. }) => {
            entry.status = TrajectoryStatus::Failed;
            entry.error = Some(e.to_string());
            return Ok(entry);
        }
        Err(e) => return Err(e),
    };
    let rc = &spec.render;
    let mut data = Vec::with_capacity(spec.frames * rc.frame_len());
    for s in &traj.states {
        data.extend(render_frame(&system, s, rc, color));
    }
    let tensor = FrameTensor::new(spec.frames, rc.height, rc.width, rc.channels(), data)?;
    let bytes = tensor.to_bytes();
    let name = trajectory_file_name(index);
    fs::write(out_dir.join(&name), &bytes).map_err(io_at(index))?;
    entry.sha256 = Some(sha256_hex(&bytes));
    entry.file = Some(name);
    Ok(entry)
}

/// Samples, integrates and renders `spec.count` trajectories into `out_dir`.
/// Trajectories run in parallel on the current rayon pool; the output bytes
/// do not depend on the thread count.
pub fn generate_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<VideoDataset> {
    spec.validate()?;
    fs::create_dir_all(out_dir)?;
    // Drop any previous completion marker and trajectory files so a partial
    // rerun can never look complete or leave stale tensors behind.
    for entry in fs::read_dir(out_dir)? {
        let path = entry?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if name == MANIFEST_FILE || (name.starts_with("traj_") && name.ends_with(".hgf")) {
            fs::remove_file(&path)?;
        }
    }
    let trajectories: Vec<TrajectoryEntry> = (0..spec.count)
        .into_par_iter()
        .map(|i| generate_one(spec, i, out_dir))
        .collect::<Result<_>>()?;
    let failed = trajectories.iter().filter(|t| t.status == TrajectoryStatus::Failed).count();
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        spec: spec.clone(),
        frame_times: spec.frame_times(),
        completed: spec.count - failed,
        failed,
        trajectories,
    };
    let tmp = out_dir.join(format!("{MANIFEST_FILE}.tmp"));
    fs::write(&tmp, serde_json::to_vec_pretty(&manifest)?)?;
    fs::rename(&tmp, out_dir.join(MANIFEST_FILE))?;
    Ok(VideoDataset {
        root: out_dir.to_path_buf(),
        manifest,
    })
}

/// A validated dataset directory. Frame tensors are read on demand.
#[derive(Debug, Clone)]
pub struct VideoDataset {
    pub root: PathBuf,
    pub manifest: Manifest,
}

fn corrupt(path: &Path, detail: impl Into<String>) -> Error {
    Error::CorruptDataset {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Opens a dataset, checking the manifest against the files on disk.
pub fn load_dataset(root: &Path) -> Result<VideoDataset> {
    let manifest_path = root.join(MANIFEST_FILE);
    let text = fs::read(&manifest_path).map_err(|e| corrupt(&manifest_path, format!("cannot read manifest: {e}")))?;
    let manifest: Manifest =
        serde_json::from_slice(&text).map_err(|e| corrupt(&manifest_path, format!("invalid manifest: {e}")))?;
    if manifest.schema_version != MANIFEST_SCHEMA_VERSION {
        return Err(corrupt(
            &manifest_path,
            format!("unsupported schema version {}", manifest.schema_version),
        ));
    }
    let spec = &manifest.spec;
    if manifest.trajectories.len() != spec.count {
        return Err(corrupt(
            &manifest_path,
            format!("manifest lists {} trajectories, count is {}", manifest.trajectories.len(), spec.count),
        ));
    }
    let expected_len = (20 + 4 * spec.frames * spec.render.frame_len()) as u64;
    for (i, t) in manifest.trajectories.iter().enumerate() {
        if t.index != i {
            return Err(corrupt(&manifest_path, format!("entry {i} has index {}", t.index)));
        }
        if t.status == TrajectoryStatus::Failed {
            continue;
        }
        let file = t
            .file
            .as_ref()
            .ok_or_else(|| corrupt(&manifest_path, format!("trajectory {i} has no file")))?;
        let path = root.join(file);
        match fs::metadata(&path) {
            Ok(m) if m.len() == expected_len => {}
            Ok(m) => {
                return Err(corrupt(
                    &path,
                    format!("trajectory {i} file has {} bytes, expected {expected_len}", m.len()),
                ))
            }
            Err(_) => return Err(corrupt(&path, format!("trajectory {i} file is missing"))),
        }
    }
    Ok(VideoDataset {
        root: root.to_path_buf(),
        manifest,
    })
}

impl VideoDataset {
    pub fn spec(&self) -> &DatasetSpec {
        &self.manifest.spec
    }

    /// Trajectories that rendered successfully, in manifest order.
    pub fn entries(&self) -> impl Iterator<Item = &TrajectoryEntry> {
        self.manifest
            .trajectories
            .iter()
            .filter(|t| t.status == TrajectoryStatus::Ok)
    }

    pub fn len(&self) -> usize {
        self.manifest.completed
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reads one trajectory's frames, verifying its checksum and shape.
    pub fn load_trajectory(&self, entry: &TrajectoryEntry) -> Result<FrameTensor> {
        let file = entry.file.as_ref().ok_or_else(|| {
            corrupt(&self.root, format!("trajectory {} has no frames", entry.index))
        })?;
        let path = self.root.join(file);
        let bytes = fs::read(&path).map_err(|e| corrupt(&path, format!("trajectory {}: {e}", entry.index)))?;
        if entry.sha256.as_deref() != Some(sha256_hex(&bytes).as_str()) {
            return Err(corrupt(&path, format!("trajectory {} checksum mismatch", entry.index)));
        }
        let tensor = FrameTensor::from_bytes(&bytes).map_err(|e| corrupt(&path, e.to_string()))?;
        let rc = &self.spec().render;
        if (tensor.frames, tensor.height, tensor.width, tensor.channels)
            != (self.spec().frames, rc.height, rc.width, rc.channels())
        {
            return Err(corrupt(&path, format!("trajectory {} has the wrong shape", entry.index)));
        }
        Ok(tensor)
    }

    /// `(frames, entry)` pairs in manifest order.
    pub fn iter(&self) -> impl Iterator<Item = Result<(FrameTensor, &TrajectoryEntry)>> {
        self.entries().map(move |e| self.load_trajectory(e).map(|t| (t, e)))
    }

    pub fn load_all(&self) -> Result<Vec<FrameTensor>> {
        self.iter().map(|r| r.map(|(t, _)| t)).collect()
    }
}

/// Uniform start index of a `len`-frame window in a `frames`-frame video.
pub fn window_start<R: Rng + ?Sized>(frames: usize, len: usize, rng: &mut R) -> Result<usize> {
    if len == 0 || len > frames {
        return Err(Error::Shape(format!("cannot take {len} consecutive frames from {frames}")));
    }
    Ok(rng.random_range(0..=frames - len))
}

/// SHA-256 over every file under `dir`: relative path, byte length and
/// contents, in sorted path order.
pub fn dataset_hash(dir: &Path) -> Result<String> {
    let mut files = Vec::new();
    for entry in WalkDir::new(dir).min_depth(1) {
        let entry = entry.map_err(|e| Error::Io {
            trajectory: None,
            source: e.into(),
        })?;
        if entry.file_type().is_dir() {
            continue;
        }
        let rel = entry.path().strip_prefix(dir).expect("walkdir yields paths under its root");
        let rel: Vec<String> = rel.components().map(|c| c.as_os_str().to_string_lossy().into_owned()).collect();
        files.push((rel.join("/"), entry.into_path()));
    }
    files.sort();
    let mut hasher = Sha256::new();
    for (rel, path) in files {
        let bytes = fs::read(&path)?;
        hasher.update(rel.as_bytes());
        hasher.update([0u8]);
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}
