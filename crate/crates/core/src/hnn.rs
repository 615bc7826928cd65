//! Learned Hamiltonian motion model.
//!
//! A scalar-headed network `H_θ(q ‖ p)` is used as a [`HamiltonianField`];
//! its dynamics come from Hamilton's equations applied to the network's
//! input gradient. [`train_hnn`] fits it by supervised learning, either on
//! derivative pairs or on multi-step leapfrog rollouts.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_update, summed_gradients, Activation, AdamConfig, AdamState, Mlp, Tape, Var};
use crate::error::{Error, Result};
use crate::integrators::DEFAULT_DT;
use crate::phase::{EnergyGradient, HamiltonianField, PhaseDerivative, PhaseState, Trajectory};

pub const DEFAULT_HIDDEN: [usize; 2] = [64, 64];

#[derive(Debug, Clone, PartialEq)]
pub struct LearnedHamiltonian {
    net: Mlp,
}

/// Energy and its gradient recorded on a tape.
#[derive(Debug, Clone)]
pub struct TapeGradient {
    pub energy: Var,
    pub wrt_q: Vec<Var>,
    pub wrt_p: Vec<Var>,
}

/// A phase state whose components are tape variables.
#[derive(Debug, Clone)]
pub struct TapeState {
    pub q: Vec<Var>,
    pub p: Vec<Var>,
}

impl TapeState {
    pub fn concat(&self) -> Vec<Var> {
        self.q.iter().chain(&self.p).copied().collect()
    }

    pub fn values(&self, tape: &Tape) -> Result<PhaseState> {
        PhaseState::new(tape.values(&self.q), tape.values(&self.p))
    }
}

impl LearnedHamiltonian {
    /// Wraps a network with an even input width `2k` and a scalar output.
    pub fn new(net: Mlp) -> Result<Self> {
        if !net.d_in().is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "Hamiltonian network input must be (q, p) of even width, got {}",
                net.d_in()
            )));
        }
        if net.d_out() != 1 {
            return Err(Error::Shape(format!(
                "Hamiltonian network must be scalar-headed, got {} outputs",
                net.d_out()
            )));
        }
        Ok(LearnedHamiltonian { net })
    }

    /// `2k → hidden… → 1` network with seeded initialization.
    pub fn with_architecture(k: usize, hidden: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut widths = vec![2 * k];
        widths.extend_from_slice(hidden);
        widths.push(1);
        Self::new(Mlp::new(&widths, activation, seed)?)
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn k(&self) -> usize {
        self.net.d_in() / 2
    }

    pub fn gradient_tape(&self, tape: &mut Tape, params: &[Var], q: &[Var], p: &[Var]) -> Result<TapeGradient> {
        let x: Vec<Var> = q.iter().chain(p).copied().collect();
        let (energy, mut g) = self.net.input_gradient_tape(tape, params, &x)?;
        let wrt_p = g.split_off(self.k());
        Ok(TapeGradient {
            energy,
            wrt_q: g,
            wrt_p,
        })
    }

    /// Kick–drift–kick on the tape. Also returns the gradient evaluated at the
    /// starting state, which callers can reuse for `ṗ` there.
    pub fn leapfrog_step_tape(
        &self,
        tape: &mut Tape,
        params: &[Var],
        s: &TapeState,
        dt: f64,
    ) -> Result<(TapeState, TapeGradient)> {
        let half = 0.5 * dt;
        let start = self.gradient_tape(tape, params, &s.q, &s.p)?;
        let p_half: Vec<Var> = s
            .p
            .iter()
            .zip(&start.wrt_q)
            .map(|(&p, &d)| {
                let kick = tape.scale(d, -half);
                tape.add(p, kick)
            })
            .collect();
        let g = self.gradient_tape(tape, params, &s.q, &p_half)?;
        let q_new: Vec<Var> = s
            .q
            .iter()
            .zip(&g.wrt_p)
            .map(|(&q, &d)| {
                let drift = tape.scale(d, dt);
                tape.add(q, drift)
            })
            .collect();
        let g = self.gradient_tape(tape, params, &q_new, &p_half)?;
        let p_new: Vec<Var> = p_half
            .iter()
            .zip(&g.wrt_q)
            .map(|(&p, &d)| {
                let kick = tape.scale(d, -half);
                tape.add(p, kick)
            })
            .collect();
        if let Some(v) = q_new.iter().chain(&p_new).find(|&&v| !tape.value(v).is_finite()) {
            return Err(Error::numerical("tape leapfrog", format!("non-finite node {}", v.index())));
        }
        Ok((TapeState { q: q_new, p: p_new }, start))
    }
}

impl HamiltonianField for LearnedHamiltonian {
    fn dim(&self) -> usize {
        self.k()
    }

    fn energy(&self, q: &[f64], p: &[f64]) -> f64 {
        let x: Vec<f64> = q.iter().chain(p).copied().collect();
        self.net.forward(&x).map(|y| y[0]).unwrap_or(f64::NAN)
    }

    fn gradient(&self, q: &[f64], p: &[f64]) -> EnergyGradient {
        let x: Vec<f64> = q.iter().chain(p).copied().collect();
        match self.net.input_gradient(&x) {
            Ok((_, mut g)) => {
                let wrt_p = g.split_off(self.k());
                EnergyGradient { wrt_q: g, wrt_p }
            }
            Err(_) => EnergyGradient {
                wrt_q: vec![f64::NAN; q.len()],
                wrt_p: vec![f64::NAN; p.len()],
            },
        }
    }
}

/// Wraps `net` as a Hamiltonian field.
pub fn hnn_field(net: Mlp) -> Result<LearnedHamiltonian> {
    LearnedHamiltonian::new(net)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum LossMode {
    /// Match `(q̇, ṗ)` predicted by the field to ground-truth derivatives.
    DerivativeMatch,
    /// Match states reached by `horizon` leapfrog steps to observed states.
    MultiStep { horizon: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HnnTrainConfig {
    pub loss: LossMode,
    pub batch_size: usize,
    pub steps: usize,
    pub adam: AdamConfig,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    /// Leapfrog step for multi-step losses; derivative pairs ignore it.
    pub dt: f64,
}

impl Default for HnnTrainConfig {
    fn default() -> Self {
        HnnTrainConfig {
            loss: LossMode::DerivativeMatch,
            batch_size: 64,
            steps: 3000,
            adam: AdamConfig {
                lr: 1e-3,
                beta1: 0.9,
                beta2: 0.999,
                eps: 1e-8,
            },
            seed: 0,
            hidden: DEFAULT_HIDDEN.to_vec(),
            activation: Activation::Tanh,
            dt: DEFAULT_DT,
        }
    }
}

impl HnnTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if let LossMode::MultiStep { horizon: 0 } = self.loss {
            return Err(Error::Config("multi-step horizon must be at least 1".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        self.adam.validate()
    }
}

/// Supervision for [`train_hnn`].
#[derive(Debug, Clone)]
pub enum HnnData {
    Derivatives(Vec<(PhaseState, PhaseDerivative)>),
    Trajectories(Vec<Trajectory>),
}

impl HnnData {
    fn dim(&self) -> Result<usize> {
        let dims: Vec<usize> = match self {
            HnnData::Derivatives(pairs) => pairs.iter().map(|(s, _)| s.dim()).collect(),
            HnnData::Trajectories(trs) => trs.iter().flat_map(|t| t.states.iter().map(|s| s.dim())).collect(),
        };
        let k = *dims.first().ok_or_else(|| Error::Config("training data is empty".into()))?;
        if dims.iter().any(|&d| d != k) {
            return Err(Error::Shape("training data mixes configuration dimensions".into()));
        }
        if let HnnData::Derivatives(pairs) = self {
            if pairs.iter().any(|(_, d)| d.dq.len() != k || d.dp.len() != k) {
                return Err(Error::Shape("derivative dimension differs from state".into()));
            }
        }
        Ok(k)
    }

    /// Derivative pairs, estimating derivatives of trajectories by central
    /// differences at interior states.
    fn derivative_pairs(&self) -> Result<Vec<(PhaseState, PhaseDerivative)>> {
        match self {
            HnnData::Derivatives(pairs) => Ok(pairs.clone()),
            HnnData::Trajectories(trs) => {
                let mut out = Vec::new();
                for tr in trs {
                    for j in 1..tr.len().saturating_sub(1) {
                        let (a, b) = (&tr.states[j - 1], &tr.states[j + 1]);
                        let diff = |x: &[f64], y: &[f64]| -> Vec<f64> {
                            x.iter().zip(y).map(|(x, y)| (y - x) / (2.0 * tr.dt)).collect()
                        };
                        out.push((
                            tr.states[j].clone(),
                            PhaseDerivative {
                                dq: diff(a.q(), b.q()),
                                dp: diff(a.p(), b.p()),
                            },
                        ));
                    }
                }
                Ok(out)
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedHnn {
    pub model: LearnedHamiltonian,
    pub loss_history: Vec<f64>,
}

/// Mean squared error between the field's `(q̇, ṗ)` and `target`, recorded
/// on the tape and divided by `denominator`.
pub fn derivative_loss_tape(
    model: &LearnedHamiltonian,
    tape: &mut Tape,
    params: &[Var],
    state: &PhaseState,
    target: &PhaseDerivative,
    denominator: f64,
) -> Result<Var> {
    let q = tape.leaves(state.q());
    let p = tape.leaves(state.p());
    let g = model.gradient_tape(tape, params, &q, &p)?;
    let mut terms = Vec::with_capacity(2 * q.len());
    for (&pred, &truth) in g.wrt_p.iter().zip(&target.dq) {
        let d = tape.offset(pred, -truth);
        terms.push(tape.square(d));
    }
    // ṗ = -∂H/∂q, so ṗ - truth = -(∂H/∂q + truth)
    for (&pred, &truth) in g.wrt_q.iter().zip(&target.dp) {
        let d = tape.offset(pred, truth);
        terms.push(tape.square(d));
    }
    let total = tape.sum(&terms);
    Ok(tape.scale(total, 1.0 / denominator))
}

enum Samples {
    Pairs(Vec<(PhaseState, PhaseDerivative)>),
    Windows(Vec<(Vec<PhaseState>, f64)>),
}

impl Samples {
    fn len(&self) -> usize {
        match self {
            Samples::Pairs(v) => v.len(),
            Samples::Windows(v) => v.len(),
        }
    }
}

/// Trains a fresh `2k → hidden → 1` network on `data`.
pub fn train_hnn(data: &HnnData, cfg: &HnnTrainConfig) -> Result<TrainedHnn> {
    cfg.validate()?;
    let k = data.dim()?;
    let model = LearnedHamiltonian::with_architecture(k, &cfg.hidden, cfg.activation, cfg.seed)?;
    train_hnn_from(model, data, cfg)
}

/// Continues training `model` on `data`.
pub fn train_hnn_from(mut model: LearnedHamiltonian, data: &HnnData, cfg: &HnnTrainConfig) -> Result<TrainedHnn> {
    cfg.validate()?;
    let k = data.dim()?;
    if k != model.k() {
        return Err(Error::Shape(format!("model has k = {}, data has k = {k}", model.k())));
    }
    let samples = match cfg.loss {
        LossMode::DerivativeMatch => Samples::Pairs(data.derivative_pairs()?),
        LossMode::MultiStep { horizon } => {
            let HnnData::Trajectories(trs) = data else {
                return Err(Error::Config("multi-step training needs trajectories".into()));
            };
            let windows: Vec<_> = trs
                .iter()
                .flat_map(|tr| {
                    (0..tr.len().saturating_sub(horizon))
                        .map(move |j| (tr.states[j..=j + horizon].to_vec(), tr.dt))
                })
                .collect();
            Samples::Windows(windows)
        }
    };
    if samples.len() == 0 {
        return Err(Error::Config("training data yields no samples".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x5eed));
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut cursor = order.len();
    let mut adam = AdamState::new(model.net().params().len());
    let mut history = Vec::with_capacity(cfg.steps);
    let width = adam.m.len();

    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.min(samples.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
            }
            batch.push(order[cursor]);
            cursor += 1;
        }
        let denom = batch.len() as f64;
        let current = &model;
        let (grad, losses) = summed_gradients(batch.len(), width, |tape, i| {
            let params = current.net().register(tape);
            let loss = match &samples {
                Samples::Pairs(pairs) => {
                    let (s, d) = &pairs[batch[i]];
                    derivative_loss_tape(current, tape, &params, s, d, denom * 2.0 * k as f64)?
                }
                Samples::Windows(windows) => {
                    let (states, dt) = &windows[batch[i]];
                    multistep_loss_tape(current, tape, &params, states, *dt, denom)?
                }
            };
            let value = tape.value(loss);
            Ok((tape.gradient_wrt(loss, &params)?, value))
        })?;
        let loss: f64 = losses.iter().sum();
        if !loss.is_finite() {
            return Err(Error::TrainingDiverged {
                phase: "step",
                index: step,
                detail: format!("loss became {loss}"),
            });
        }
        history.push(loss);
        adam_update(model.net_mut().params_mut(), &grad, &mut adam, &cfg.adam).map_err(|e| Error::TrainingDiverged {
            phase: "step",
            index: step,
            detail: e.to_string(),
        })?;
    }
    Ok(TrainedHnn {
        model,
        loss_history: history,
    })
}

fn multistep_loss_tape(
    model: &LearnedHamiltonian,
    tape: &mut Tape,
    params: &[Var],
    states: &[PhaseState],
    dt: f64,
    batch: f64,
) -> Result<Var> {
    let horizon = states.len() - 1;
    let k = states[0].dim();
    let mut s = TapeState {
        q: tape.leaves(states[0].q()),
        p: tape.leaves(states[0].p()),
    };
    let mut terms = Vec::with_capacity(2 * k * horizon);
    for target in &states[1..] {
        s = model.leapfrog_step_tape(tape, params, &s, dt)?.0;
        for (&v, &t) in s.q.iter().zip(target.q()).chain(s.p.iter().zip(target.p())) {
            let d = tape.offset(v, -t);
            terms.push(tape.square(d));
        }
    }
    let total = tape.sum(&terms);
    Ok(tape.scale(total, 1.0 / (batch * horizon as f64 * 2.0 * k as f64)))
}

/// Mean squared error of predicted derivatives over `pairs`.
pub fn derivative_mse(model: &LearnedHamiltonian, pairs: &[(PhaseState, PhaseDerivative)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Config("no derivative pairs to evaluate".into()));
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (s, d) in pairs {
        let pred = crate::phase::time_derivative(model, s)?;
        for (a, b) in pred.dq.iter().zip(&d.dq).chain(pred.dp.iter().zip(&d.dp)) {
            total += (a - b) * (a - b);
            count += 1;
        }
    }
    Ok(total / count as f64)
}

pub const HNN_WEIGHTS_FILE: &str = "hnn.hgw";
pub const HNN_METADATA_FILE: &str = "hnn.json";

/// JSON sidecar stored next to an HNN checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HnnMetadata {
    pub schema_version: u32,
    pub k: usize,
    pub widths: Vec<usize>,
    pub activation: Activation,
    pub seed: u64,
    pub loss: LossMode,
    pub dt: f64,
}

pub fn save_hnn(dir: &Path, model: &LearnedHamiltonian, cfg: &HnnTrainConfig) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    model.net().save_checkpoint(&dir.join(HNN_WEIGHTS_FILE))?;
    let meta = HnnMetadata {
        schema_version: 1,
        k: model.k(),
        widths: model.net().widths().to_vec(),
        activation: model.net().activation(),
        seed: cfg.seed,
        loss: cfg.loss,
        dt: cfg.dt,
    };
    std::fs::write(dir.join(HNN_METADATA_FILE), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn load_hnn(dir: &Path) -> Result<(LearnedHamiltonian, HnnMetadata)> {
    let meta: HnnMetadata = serde_json::from_slice(&std::fs::read(dir.join(HNN_METADATA_FILE))?)?;
    let net = Mlp::load_checkpoint(&dir.join(HNN_WEIGHTS_FILE), meta.activation)?;
    if net.widths() != meta.widths.as_slice() {
        return Err(Error::Shape("checkpoint widths disagree with metadata".into()));
    }
    Ok((LearnedHamiltonian::new(net)?, meta))
}
