//! Adversarial video generation with a Hamiltonian motion model.
//!
//! A sample is produced as follows: content noise `z_c` and motion noise `z_m`
//! are drawn; the configuration map sends `z_m` to `y₀`; the learned
//! Hamiltonian is integrated with leapfrog to `y₁ … y_{N−1}`; and the frame
//! generator renders `x̂_j = G_I(z_c ‖ y_j)`. An image discriminator scores
//! single frames and a video discriminator scores windows of `T` consecutive
//! frames. The generator objective adds the cyclic-coordinate penalty.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_update, sigmoid, summed_gradients, Activation, AdamConfig, AdamState, Mlp, Tape, Var};
use crate::config_map::{gaussian_vector, ConfigMap};
use crate::cyclic::{cyclic_penalty, cyclic_penalty_tape, CyclicConfig, CyclicMode};
use crate::dataset::window_start;
use crate::error::{Error, Result};
use crate::hnn::{LearnedHamiltonian, TapeState};
use crate::integrators::{rollout, IntegratorConfig, DEFAULT_DT};
use crate::phase::{HamiltonianField, PhaseState, Trajectory};
use crate::render::FrameTensor;

/// Probabilities are clamped to `[PROB_FLOOR, 1 − PROB_FLOOR]` before logs.
pub const PROB_FLOOR: f64 = 1e-7;

pub const GAN_MODEL_FILE: &str = "model.json";
pub const GAN_SCHEMA_VERSION: u32 = 1;
const NET_FILES: [&str; 5] = [
    "config_map.hgw",
    "hamiltonian.hgw",
    "generator.hgw",
    "image_discriminator.hgw",
    "video_discriminator.hgw",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanArchitecture {
    /// Configuration-space dimension; latent states have `2k` components.
    pub k: usize,
    pub motion_dim: usize,
    pub content_dim: usize,
    pub map_hidden: usize,
    pub hnn_hidden: Vec<usize>,
    pub hnn_activation: Activation,
    pub generator_hidden: Vec<usize>,
    pub image_disc_hidden: Vec<usize>,
    pub video_disc_hidden: Vec<usize>,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    /// Frames per video-discriminator window.
    pub window: usize,
    pub dt: f64,
    /// Ablation: `y₀` is the first `2k` components of `z_m` and the
    /// configuration map is never trained.
    pub pass_through_map: bool,
}

impl Default for GanArchitecture {
    fn default() -> Self {
        GanArchitecture {
            k: 2,
            motion_dim: 10,
            content_dim: 10,
            map_hidden: 64,
            hnn_hidden: vec![64, 64],
            hnn_activation: Activation::Tanh,
            generator_hidden: vec![128],
            image_disc_hidden: vec![64],
            video_disc_hidden: vec![64],
            width: 16,
            height: 16,
            channels: 1,
            window: 16,
            dt: DEFAULT_DT,
            pass_through_map: false,
        }
    }
}

impl GanArchitecture {
    pub fn frame_len(&self) -> usize {
        self.width * self.height * self.channels
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("k", self.k),
            ("motion_dim", self.motion_dim),
            ("content_dim", self.content_dim),
            ("map_hidden", self.map_hidden),
            ("width", self.width),
            ("height", self.height),
            ("window", self.window),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be at least 1")));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(Error::Config(format!("channels must be 1 or 3, got {}", self.channels)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if self.pass_through_map && self.motion_dim < 2 * self.k {
            return Err(Error::Config(format!(
                "pass-through map needs motion_dim >= 2k = {}, got {}",
                2 * self.k,
                self.motion_dim
            )));
        }
        Ok(())
    }

    fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
        std::iter::once(input).chain(hidden.iter().copied()).chain(std::iter::once(output)).collect()
    }
}

/// Every network of the pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct GanModel {
    pub arch: GanArchitecture,
    pub config_map: ConfigMap,
    pub hamiltonian: LearnedHamiltonian,
    /// Frame generator; pixels are the sigmoid of its outputs.
    pub generator: Mlp,
    /// Image discriminator; the probability is the sigmoid of its logit.
    pub image_disc: Mlp,
    pub video_disc: Mlp,
}

impl GanModel {
    pub fn new(arch: GanArchitecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let px = arch.frame_len();
        let config_map = ConfigMap::new(arch.motion_dim, arch.k, arch.map_hidden, seed)?;
        let hamiltonian =
            LearnedHamiltonian::with_architecture(arch.k, &arch.hnn_hidden, arch.hnn_activation, seed.wrapping_add(1))?;
        let generator = Mlp::new(
            &GanArchitecture::widths(arch.content_dim + 2 * arch.k, &arch.generator_hidden, px),
            Activation::Tanh,
            seed.wrapping_add(2),
        )?;
        let image_disc = Mlp::new(
            &GanArchitecture::widths(px, &arch.image_disc_hidden, 1),
            Activation::Tanh,
            seed.wrapping_add(3),
        )?;
        let video_disc = Mlp::new(
            &GanArchitecture::widths(arch.window * px, &arch.video_disc_hidden, 1),
            Activation::Tanh,
            seed.wrapping_add(4),
        )?;
        Ok(GanModel {
            arch,
            config_map,
            hamiltonian,
            generator,
            image_disc,
            video_disc,
        })
    }

    /// Replaces the Hamiltonian, e.g. with one pretrained on trajectories.
    pub fn with_hamiltonian(mut self, hamiltonian: LearnedHamiltonian) -> Result<Self> {
        if hamiltonian.k() != self.arch.k {
            return Err(Error::Shape(format!(
                "hamiltonian has k = {}, model expects {}",
                hamiltonian.k(),
                self.arch.k
            )));
        }
        self.arch.hnn_hidden = hamiltonian.net().widths()[1..hamiltonian.net().widths().len() - 1].to_vec();
        self.arch.hnn_activation = hamiltonian.net().activation();
        self.hamiltonian = hamiltonian;
        Ok(self)
    }

    fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
        if got != want {
            return Err(Error::Shape(format!("{what} has length {got}, expected {want}")));
        }
        Ok(())
    }

    /// `y₀` for motion noise `z_m`.
    pub fn initial_state(&self, z_m: &[f64]) -> Result<PhaseState> {
        Self::check_len("z_m", z_m.len(), self.arch.motion_dim)?;
        if self.arch.pass_through_map {
            PhaseState::from_concat(&z_m[..2 * self.arch.k])
        } else {
            self.config_map.map_noise(z_m)
        }
    }

    /// Latent trajectory `y₀ … y_{n−1}`; depends on `z_m` only.
    pub fn latent_rollout(&self, z_m: &[f64], n: usize) -> Result<Trajectory> {
        if n == 0 {
            return Err(Error::Shape("a video needs at least one frame".into()));
        }
        let y0 = self.initial_state(z_m)?;
        rollout(&self.hamiltonian, &y0, &IntegratorConfig::leapfrog(self.arch.dt, n - 1))
            .map_err(|e| e.within("latent rollout"))
    }

    /// One frame `sigmoid(G_I(z_c ‖ y))`.
    pub fn render(&self, z_c: &[f64], y: &PhaseState) -> Result<Vec<f64>> {
        Self::check_len("z_c", z_c.len(), self.arch.content_dim)?;
        let input: Vec<f64> = z_c.iter().copied().chain(y.concat()).collect();
        Ok(self.generator.forward(&input)?.into_iter().map(sigmoid).collect())
    }

    pub fn generate_video(&self, z_c: &[f64], z_m: &[f64], n: usize) -> Result<GeneratedVideo> {
        let latents = self.latent_rollout(z_m, n)?;
        let mut data = Vec::with_capacity(n * self.arch.frame_len());
        for s in &latents.states {
            data.extend(self.render(z_c, s)?.into_iter().map(|v| v as f32));
        }
        let frames = FrameTensor::new(n, self.arch.height, self.arch.width, self.arch.channels, data)?;
        Ok(GeneratedVideo { frames, latents })
    }

    /// `D_I(frame)` as a probability.
    pub fn image_score(&self, frame: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.image_disc.forward(frame)?[0]))
    }

    /// `D_V(window)` as a probability; the window is `T` frames concatenated.
    pub fn video_score(&self, window: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.video_disc.forward(window)?[0]))
    }

    fn nets(&self) -> [&Mlp; 5] {
        [
            self.config_map.net(),
            self.hamiltonian.net(),
            &self.generator,
            &self.image_disc,
            &self.video_disc,
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedVideo {
    pub frames: FrameTensor,
    pub latents: Trajectory,
}

/// Samples `i` consecutive frames with a uniformly random start.
pub fn s_window<'a, R: Rng + ?Sized>(video: &'a FrameTensor, i: usize, rng: &mut R) -> Result<&'a [f32]> {
    let start = window_start(video.frames, i, rng)?;
    video.window(start, i)
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

/// `−log D(real)` with the probability clamped.
pub fn real_term(prob: f64) -> f64 {
    -clamp_prob(prob).ln()
}

/// `−log(1 − D(fake))` with the probability clamped.
pub fn fake_term(prob: f64) -> f64 {
    -clamp_prob(1.0 - prob).ln()
}

/// Single frames (`S₁`) and `T`-frame windows (`S_T`) for one side of a batch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WindowBatch {
    pub frames: Vec<Vec<f64>>,
    pub windows: Vec<Vec<f64>>,
}

fn mean_of<F: Fn(&[f64]) -> Result<f64>>(xs: &[Vec<f64>], f: F) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    let mut total = 0.0;
    for x in xs {
        total += f(x)?;
    }
    Ok(total / xs.len() as f64)
}

/// Binary cross-entropy discriminator loss summed over both discriminators.
pub fn discriminator_loss(model: &GanModel, real: &WindowBatch, fake: &WindowBatch) -> Result<f64> {
    Ok(mean_of(&real.frames, |x| model.image_score(x).map(real_term))?
        + mean_of(&fake.frames, |x| model.image_score(x).map(fake_term))?
        + mean_of(&real.windows, |x| model.video_score(x).map(real_term))?
        + mean_of(&fake.windows, |x| model.video_score(x).map(fake_term))?)
}

/// Non-saturating generator loss plus the cyclic penalty over `dp_rows`.
pub fn generator_loss(model: &GanModel, fake: &WindowBatch, dp_rows: &[Vec<f64>], lambda: f64) -> Result<f64> {
    let adversarial = mean_of(&fake.frames, |x| model.image_score(x).map(real_term))?
        + mean_of(&fake.windows, |x| model.video_score(x).map(real_term))?;
    let cyclic = if lambda == 0.0 { 0.0 } else { cyclic_penalty(dp_rows, lambda)? };
    Ok(adversarial + cyclic)
}

fn default_true() -> bool {
    true
}

/// Optimizer settings for each network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanOptimizers {
    pub config_map: AdamConfig,
    pub hamiltonian: AdamConfig,
    pub generator: AdamConfig,
    pub image_disc: AdamConfig,
    pub video_disc: AdamConfig,
}

impl Default for GanOptimizers {
    fn default() -> Self {
        let a = AdamConfig::default();
        GanOptimizers {
            config_map: a,
            hamiltonian: a,
            generator: a,
            image_disc: a,
            video_disc: a,
        }
    }
}

impl GanOptimizers {
    fn all(&self) -> [&AdamConfig; 5] {
        [
            &self.config_map,
            &self.hamiltonian,
            &self.generator,
            &self.image_disc,
            &self.video_disc,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GanTrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    /// Frames generated per fake sample.
    pub n_frames: usize,
    pub cyclic: CyclicConfig,
    /// Whether the cyclic penalty also trains the configuration map and
    /// the earlier rollout steps. When false it sees each `y_j` as a
    /// constant and only shapes the Hamiltonian's slope there.
    #[serde(default = "default_true")]
    pub cyclic_through_map: bool,
    pub optim: GanOptimizers,
    pub seed: u64,
}

impl Default for GanTrainConfig {
    fn default() -> Self {
        GanTrainConfig {
            batch_size: 16,
            steps: 500,
            n_frames: 16,
            cyclic: CyclicConfig::default(),
            cyclic_through_map: true,
            optim: GanOptimizers::default(),
            seed: 0,
        }
    }
}

impl GanTrainConfig {
    pub fn validate(&self, arch: &GanArchitecture) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if arch.window > self.n_frames {
            return Err(Error::Config(format!(
                "window {} exceeds generated frames {}",
                arch.window, self.n_frames
            )));
        }
        self.cyclic.validate()?;
        for a in self.optim.all() {
            a.validate()?;
        }
        Ok(())
    }
}

/// Noise and window positions for one batch element.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleNoise {
    pub z_c: Vec<f64>,
    pub z_m: Vec<f64>,
    pub fake_frame: usize,
    pub fake_window: usize,
    pub real_video: usize,
    pub real_frame: usize,
    pub real_window: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    /// Adversarial part of `g_loss`.
    pub g_adv: f64,
    pub cyclic_term: f64,
    pub d_real_acc: f64,
    pub d_fake_acc: f64,
}

impl StepMetrics {
    fn first_non_finite(&self) -> Option<&'static str> {
        [
            ("d_loss", self.d_loss),
            ("g_loss", self.g_loss),
            ("cyclic_term", self.cyclic_term),
        ]
        .into_iter()
        .find(|(_, v)| !v.is_finite())
        .map(|(n, _)| n)
    }
}

struct FakeSample {
    frame: Vec<f64>,
    window: Vec<f64>,
}

/// Owns the model, optimizer state and random stream of a training run.
pub struct GanTrainer<'d> {
    pub model: GanModel,
    pub cfg: GanTrainConfig,
    data: &'d [FrameTensor],
    adam: [AdamState; 5],
    rng: ChaCha8Rng,
    step: usize,
}

impl<'d> GanTrainer<'d> {
    pub fn new(model: GanModel, data: &'d [FrameTensor], cfg: GanTrainConfig) -> Result<Self> {
        model.arch.validate()?;
        cfg.validate(&model.arch)?;
        if data.is_empty() {
            return Err(Error::Config("training needs at least one video".into()));
        }
        let a = &model.arch;
        for (i, v) in data.iter().enumerate() {
            if (v.height, v.width, v.channels) != (a.height, a.width, a.channels) || v.frames < a.window {
                return Err(Error::Shape(format!(
                    "video {i} is {}x{}x{}x{}, model needs at least {} frames of {}x{}x{}",
                    v.frames, v.height, v.width, v.channels, a.window, a.height, a.width, a.channels
                )));
            }
        }
        let adam = model.nets().map(|n| AdamState::new(n.params().len()));
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Ok(GanTrainer {
            model,
            cfg,
            data,
            adam,
            rng,
            step: 0,
        })
    }

    pub fn steps_done(&self) -> usize {
        self.step
    }

    pub fn into_model(self) -> GanModel {
        self.model
    }

    pub fn sample_noise(&mut self) -> Vec<SampleNoise> {
        let a = &self.model.arch;
        let n = self.cfg.n_frames;
        (0..self.cfg.batch_size)
            .map(|_| {
                let z_c = gaussian_vector(&mut self.rng, a.content_dim);
                let z_m = gaussian_vector(&mut self.rng, a.motion_dim);
                let fake_frame = self.rng.random_range(0..n);
                let fake_window = self.rng.random_range(0..=n - a.window);
                let real_video = self.rng.random_range(0..self.data.len());
                let frames = self.data[real_video].frames;
                let real_frame = self.rng.random_range(0..frames);
                let real_window = self.rng.random_range(0..=frames - a.window);
                SampleNoise {
                    z_c,
                    z_m,
                    fake_frame,
                    fake_window,
                    real_video,
                    real_frame,
                    real_window,
                }
            })
            .collect()
    }

    pub fn real_batch(&self, noise: &[SampleNoise]) -> WindowBatch {
        let to_f64 = |xs: &[f32]| xs.iter().map(|&v| v as f64).collect::<Vec<f64>>();
        let t = self.model.arch.window;
        WindowBatch {
            frames: noise
                .iter()
                .map(|s| to_f64(self.data[s.real_video].frame(s.real_frame)))
                .collect(),
            windows: noise
                .iter()
                .map(|s| to_f64(self.data[s.real_video].window(s.real_window, t).unwrap()))
                .collect(),
        }
    }

    fn fake_sample(&self, s: &SampleNoise) -> Result<(FakeSample, Trajectory)> {
        let m = &self.model;
        let latents = m.latent_rollout(&s.z_m, self.cfg.n_frames)?;
        let frame = m.render(&s.z_c, &latents.states[s.fake_frame])?;
        let mut window = Vec::with_capacity(m.arch.window * m.arch.frame_len());
        for y in &latents.states[s.fake_window..s.fake_window + m.arch.window] {
            window.extend(m.render(&s.z_c, y)?);
        }
        Ok((FakeSample { frame, window }, latents))
    }

    /// Fake frames and windows for `noise`, plus the `ṗ` rows the cyclic
    /// penalty sees.
    pub fn fake_batch(&self, noise: &[SampleNoise]) -> Result<(WindowBatch, Vec<Vec<f64>>)> {
        let samples: Vec<(FakeSample, Trajectory)> =
            noise.par_iter().map(|s| self.fake_sample(s)).collect::<Result<_>>()?;
        let mut batch = WindowBatch::default();
        let mut rows = Vec::new();
        for (f, latents) in samples {
            let states = match self.cfg.cyclic.mode {
                CyclicMode::WholeSequence => &latents.states[..],
                CyclicMode::InitialOnly => &latents.states[..1],
            };
            rows.extend(states.iter().map(|y| self.model.hamiltonian.gradient(y.q(), y.p()).wrt_q));
            batch.frames.push(f.frame);
            batch.windows.push(f.window);
        }
        Ok((batch, rows))
    }

    fn prob_term(tape: &mut Tape, logit: Var, real: bool) -> Var {
        let z = if real { logit } else { tape.neg(logit) };
        let p = tape.sigmoid(z);
        let p = tape.clamp(p, PROB_FLOOR, 1.0 - PROB_FLOOR);
        let l = tape.ln(p);
        tape.neg(l)
    }

    /// Discriminator loss and its gradient for both discriminators (image
    /// parameters first), plus the per-sample probabilities
    /// `[D_I(real), D_I(fake), D_V(real), D_V(fake)]`.
    fn discriminator_objective(&self, real: &WindowBatch, fake: &WindowBatch) -> Result<(f64, Vec<f64>, Vec<[f64; 4]>)> {
        let m = &self.model;
        let b = real.frames.len();
        let width = m.image_disc.params().len() + m.video_disc.params().len();
        let scale = 1.0 / b as f64;
        let (grad, extras) = summed_gradients(b, width, |tape, i| {
            let pi = m.image_disc.register(tape);
            let pv = m.video_disc.register(tape);
            let logits = [
                m.image_disc.forward_tape_const(tape, &pi, &real.frames[i])?[0],
                m.image_disc.forward_tape_const(tape, &pi, &fake.frames[i])?[0],
                m.video_disc.forward_tape_const(tape, &pv, &real.windows[i])?[0],
                m.video_disc.forward_tape_const(tape, &pv, &fake.windows[i])?[0],
            ];
            let terms: Vec<Var> = logits
                .iter()
                .zip([true, false, true, false])
                .map(|(&l, real)| Self::prob_term(tape, l, real))
                .collect();
            let total = tape.sum(&terms);
            let loss = tape.scale(total, scale);
            let params: Vec<Var> = pi.into_iter().chain(pv).collect();
            let g = tape.gradient_wrt(loss, &params)?;
            Ok((g, (tape.value(loss), logits.map(|l| sigmoid(tape.value(l))))))
        })?;
        let loss = extras.iter().map(|e| e.0).sum();
        Ok((loss, grad, extras.into_iter().map(|e| e.1).collect()))
    }

    /// Generator loss for `noise` and its gradient with respect to the
    /// configuration map, Hamiltonian and frame generator parameters (in that
    /// order). Also returns the adversarial and cyclic parts.
    pub fn generator_objective(&self, noise: &[SampleNoise]) -> Result<(f64, Vec<f64>, f64, f64)> {
        let m = &self.model;
        let a = &m.arch;
        let b = noise.len();
        let n = self.cfg.n_frames;
        let lambda = self.cfg.cyclic.lambda;
        let rows_per_sample = match self.cfg.cyclic.mode {
            CyclicMode::WholeSequence => n,
            CyclicMode::InitialOnly => 1,
        };
        let width = m.config_map.net().params().len() + m.hamiltonian.net().params().len() + m.generator.params().len();
        let (grad, extras) = summed_gradients(b, width, |tape, i| {
            let s = &noise[i];
            let pf = m.config_map.net().register(tape);
            let ph = m.hamiltonian.net().register(tape);
            let pg = m.generator.register(tape);
            let pi = m.image_disc.register(tape);
            let pv = m.video_disc.register(tape);

            let mut state = if a.pass_through_map {
                let y = tape.leaves(&s.z_m[..2 * a.k]);
                TapeState {
                    q: y[..a.k].to_vec(),
                    p: y[a.k..].to_vec(),
                }
            } else {
                m.config_map.map_tape(tape, &pf, &s.z_m)?
            };
            let mut states = Vec::with_capacity(n);
            let mut slopes: Vec<Vec<Var>> = Vec::with_capacity(n);
            for j in 1..n {
                let (next, g) = m
                    .hamiltonian
                    .leapfrog_step_tape(tape, &ph, &state, a.dt)
                    .map_err(|e| e.within(format!("frame {j}")))?;
                slopes.push(g.wrt_q);
                states.push(std::mem::replace(&mut state, next));
            }
            states.push(state);

            let cyclic = if lambda == 0.0 {
                None
            } else {
                let mut rows = Vec::with_capacity(rows_per_sample);
                for (j, y) in states.iter().take(rows_per_sample).enumerate() {
                    let row = if !self.cfg.cyclic_through_map {
                        let q: Vec<Var> = y.q.iter().map(|&v| tape.detach(v)).collect();
                        let p: Vec<Var> = y.p.iter().map(|&v| tape.detach(v)).collect();
                        m.hamiltonian.gradient_tape(tape, &ph, &q, &p)?.wrt_q
                    } else if let Some(g) = slopes.get(j) {
                        g.clone()
                    } else {
                        m.hamiltonian.gradient_tape(tape, &ph, &y.q, &y.p)?.wrt_q
                    };
                    rows.push(row);
                }
                Some(cyclic_penalty_tape(tape, &rows, lambda, (b * rows_per_sample) as f64)?)
            };

            let z_c = tape.leaves(&s.z_c);
            let mut frames: Vec<Option<Vec<Var>>> = vec![None; n];
            let mut frame_at = |tape: &mut Tape, j: usize| -> Result<Vec<Var>> {
                if let Some(f) = &frames[j] {
                    return Ok(f.clone());
                }
                let input: Vec<Var> = z_c.iter().chain(&states[j].q).chain(&states[j].p).copied().collect();
                let out = m.generator.forward_tape(tape, &pg, &input)?;
                let px: Vec<Var> = out.into_iter().map(|v| tape.sigmoid(v)).collect();
                frames[j] = Some(px.clone());
                Ok(px)
            };
            let frame = frame_at(tape, s.fake_frame)?;
            let mut window = Vec::with_capacity(a.window * a.frame_len());
            for j in s.fake_window..s.fake_window + a.window {
                window.extend(frame_at(tape, j)?);
            }
            let li = m.image_disc.forward_tape(tape, &pi, &frame)?[0];
            let lv = m.video_disc.forward_tape(tape, &pv, &window)?[0];
            let ti = Self::prob_term(tape, li, true);
            let tv = Self::prob_term(tape, lv, true);
            let adv_sum = tape.add(ti, tv);
            let adv = tape.scale(adv_sum, 1.0 / b as f64);
            let loss = match cyclic {
                Some(c) => tape.add(adv, c),
                None => adv,
            };
            let params: Vec<Var> = pf.into_iter().chain(ph).chain(pg).collect();
            let g = tape.gradient_wrt(loss, &params)?;
            let cyc = cyclic.map_or(0.0, |c| tape.value(c));
            Ok((g, (tape.value(loss), tape.value(adv), cyc)))
        })?;
        let (mut loss, mut adv, mut cyc) = (0.0, 0.0, 0.0);
        for (l, a, c) in extras {
            loss += l;
            adv += a;
            cyc += c;
        }
        Ok((loss, grad, adv, cyc))
    }

    fn update(&mut self, net: usize, grad: &[f64]) -> Result<()> {
        let cfg = *self.cfg.optim.all()[net];
        let params = match net {
            0 => self.model.config_map.net_mut().params_mut(),
            1 => self.model.hamiltonian.net_mut().params_mut(),
            2 => self.model.generator.params_mut(),
            3 => self.model.image_disc.params_mut(),
            _ => self.model.video_disc.params_mut(),
        };
        adam_update(params, grad, &mut self.adam[net], &cfg)
    }

    fn diverged(&self, e: Error) -> Error {
        match e {
            Error::Numerical { location, detail } => Error::TrainingDiverged {
                phase: "step",
                index: self.step,
                detail: format!("{location}: {detail}"),
            },
            other => other,
        }
    }

    /// One discriminator update followed by one joint update of the
    /// configuration map, Hamiltonian and frame generator.
    pub fn train_step(&mut self) -> Result<StepMetrics> {
        let noise = self.sample_noise();
        self.train_step_with(&noise)
    }

    pub fn train_step_with(&mut self, noise: &[SampleNoise]) -> Result<StepMetrics> {
        let real = self.real_batch(noise);
        let (fake, _) = self.fake_batch(noise).map_err(|e| self.diverged(e))?;
        let (d_loss, d_grad, probs) = self.discriminator_objective(&real, &fake)?;
        if !d_loss.is_finite() {
            return Err(Error::TrainingDiverged {
                phase: "step",
                index: self.step,
                detail: "discriminator loss is not finite".into(),
            });
        }
        let split = self.model.image_disc.params().len();
        self.update(3, &d_grad[..split]).map_err(|e| self.diverged(e))?;
        self.update(4, &d_grad[split..]).map_err(|e| self.diverged(e))?;

        let (g_loss, g_grad, g_adv, cyclic_term) = self.generator_objective(noise).map_err(|e| self.diverged(e))?;
        let nf = self.model.config_map.net().params().len();
        let nh = self.model.hamiltonian.net().params().len();
        let metrics = StepMetrics {
            step: self.step,
            d_loss,
            g_loss,
            g_adv,
            cyclic_term,
            d_real_acc: probs.iter().map(|p| (p[0] > 0.5) as u8 as f64 + (p[2] > 0.5) as u8 as f64).sum::<f64>()
                / (2 * probs.len()) as f64,
            d_fake_acc: probs.iter().map(|p| (p[1] < 0.5) as u8 as f64 + (p[3] < 0.5) as u8 as f64).sum::<f64>()
                / (2 * probs.len()) as f64,
        };
        if let Some(name) = metrics.first_non_finite() {
            return Err(Error::TrainingDiverged {
                phase: "step",
                index: self.step,
                detail: format!("{name} is not finite"),
            });
        }
        if !self.model.arch.pass_through_map {
            self.update(0, &g_grad[..nf]).map_err(|e| self.diverged(e))?;
        }
        self.update(1, &g_grad[nf..nf + nh]).map_err(|e| self.diverged(e))?;
        self.update(2, &g_grad[nf + nh..]).map_err(|e| self.diverged(e))?;
        self.step += 1;
        Ok(metrics)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedGan {
    pub model: GanModel,
    pub history: Vec<StepMetrics>,
}

/// Runs `cfg.steps` training steps from `model`.
pub fn train_gan(model: GanModel, data: &[FrameTensor], cfg: &GanTrainConfig) -> Result<TrainedGan> {
    let mut trainer = GanTrainer::new(model, data, cfg.clone())?;
    let mut history = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        history.push(trainer.train_step()?);
    }
    Ok(TrainedGan {
        model: trainer.into_model(),
        history,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GanModelFile {
    pub kind: String,
    pub schema_version: u32,
    pub arch: GanArchitecture,
    pub networks: Vec<String>,
}

/// Writes one checkpoint per network plus `model.json`.
pub fn save_gan(dir: &Path, model: &GanModel) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (net, file) in model.nets().iter().zip(NET_FILES) {
        net.save_checkpoint(&dir.join(file))?;
    }
    let meta = GanModelFile {
        kind: "hgan".into(),
        schema_version: GAN_SCHEMA_VERSION,
        arch: model.arch.clone(),
        networks: NET_FILES.iter().map(|s| s.to_string()).collect(),
    };
    fs::write(dir.join(GAN_MODEL_FILE), serde_json::to_vec_pretty(&meta)?)?;
    Ok(())
}

pub fn load_gan(dir: &Path) -> Result<GanModel> {
    let meta: GanModelFile = serde_json::from_slice(&fs::read(dir.join(GAN_MODEL_FILE))?)?;
    if meta.kind != "hgan" || meta.schema_version != GAN_SCHEMA_VERSION {
        return Err(Error::Config(format!(
            "unsupported model file: kind {}, version {}",
            meta.kind, meta.schema_version
        )));
    }
    let arch = meta.arch;
    let reference = GanModel::new(arch.clone(), 0)?;
    let load = |i: usize, activation: Activation| -> Result<Mlp> {
        let net = Mlp::load_checkpoint(&dir.join(NET_FILES[i]), activation)?;
        if net.widths() != reference.nets()[i].widths() {
            return Err(Error::Shape(format!(
                "{} has widths {:?}, architecture expects {:?}",
                NET_FILES[i],
                net.widths(),
                reference.nets()[i].widths()
            )));
        }
        Ok(net)
    };
    Ok(GanModel {
        config_map: ConfigMap::from_net(load(0, Activation::Tanh)?)?,
        hamiltonian: LearnedHamiltonian::new(load(1, arch.hnn_activation)?)?,
        generator: load(2, Activation::Tanh)?,
        image_disc: load(3, Activation::Tanh)?,
        video_disc: load(4, Activation::Tanh)?,
        arch,
    })
}
