use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tape::{sigmoid, softplus, Tape, Var};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HGW1";

/// Hidden-layer nonlinearity. Only smooth activations are offered so that
/// input gradients are themselves differentiable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    Softplus,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Softplus => softplus(x),
        }
    }

    /// Derivative at pre-activation `a`, given `h = apply(a)`.
    fn slope(self, a: f64, h: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - h * h,
            Activation::Softplus => sigmoid(a),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    offset: usize,
    fan_in: usize,
    fan_out: usize,
}

impl Layer {
    fn weight(&self, out: usize, inp: usize) -> usize {
        self.offset + out * self.fan_in + inp
    }

    fn bias(&self, out: usize) -> usize {
        self.offset + self.fan_out * self.fan_in + out
    }

    fn row(&self, out: usize) -> std::ops::Range<usize> {
        let start = self.offset + out * self.fan_in;
        start..start + self.fan_in
    }
}

/// Dense feed-forward network with a linear output layer.
///
/// Parameters are stored flat, layer by layer: the `fan_out × fan_in`
/// row-major weight matrix followed by the `fan_out` biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

impl Mlp {
    pub fn param_count(widths: &[usize]) -> usize {
        widths.windows(2).map(|w| (w[0] + 1) * w[1]).sum()
    }

    fn check_widths(widths: &[usize]) -> Result<()> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::Shape(format!(
                "network needs at least two positive widths, got {widths:?}"
            )));
        }
        Ok(())
    }

    /// Weights and biases uniform on `±1/√fan_in`.
    pub fn new(widths: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        Self::check_widths(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(Self::param_count(widths));
        for w in widths.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..(w[0] + 1) * w[1] {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Ok(Mlp {
            widths: widths.to_vec(),
            activation,
            params,
        })
    }

    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        Self::from_params(widths, activation, vec![0.0; Self::param_count(widths)])
    }

    pub fn from_params(widths: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        Self::check_widths(widths)?;
        let expected = Self::param_count(widths);
        if params.len() != expected {
            return Err(Error::Shape(format!(
                "widths {widths:?} need {expected} parameters, got {}",
                params.len()
            )));
        }
        if let Some(i) = params.iter().position(|v| !v.is_finite()) {
            return Err(Error::numerical(format!("parameter {i}"), "non-finite weight"));
        }
        Ok(Mlp {
            widths: widths.to_vec(),
            activation,
            params,
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn d_in(&self) -> usize {
        self.widths[0]
    }

    pub fn d_out(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.params.len(),
                params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Index of the bias of output unit `out` in the last layer.
    pub fn output_bias_index(&self, out: usize) -> usize {
        self.layers().last().unwrap().bias(out)
    }

    fn layers(&self) -> Vec<Layer> {
        let mut offset = 0;
        self.widths
            .windows(2)
            .map(|w| {
                let layer = Layer {
                    offset,
                    fan_in: w[0],
                    fan_out: w[1],
                };
                offset += (w[0] + 1) * w[1];
                layer
            })
            .collect()
    }

    fn check_input(&self, len: usize) -> Result<()> {
        if len != self.d_in() {
            return Err(Error::Shape(format!(
                "network expects {} inputs, got {len}",
                self.d_in()
            )));
        }
        Ok(())
    }

    fn check_scalar_head(&self) -> Result<()> {
        if self.d_out() != 1 {
            return Err(Error::Shape(format!(
                "input gradient needs a scalar output, network has {}",
                self.d_out()
            )));
        }
        Ok(())
    }

    fn check_param_vars(&self, params: &[Var]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "expected {} parameter variables, got {}",
                self.params.len(),
                params.len()
            )));
        }
        Ok(())
    }

    /// Pre-activations and activations of every layer.
    fn forward_trace(&self, x: &[f64]) -> Vec<(Vec<f64>, Vec<f64>)> {
        let layers = self.layers();
        let mut trace: Vec<(Vec<f64>, Vec<f64>)> = Vec::with_capacity(layers.len());
        for (li, layer) in layers.iter().enumerate() {
            let input = if li == 0 { x } else { &trace[li - 1].1 };
            let pre: Vec<f64> = (0..layer.fan_out)
                .map(|o| {
                    let mut acc = self.params[layer.bias(o)];
                    for (w, xi) in self.params[layer.row(o)].iter().zip(input) {
                        acc += w * xi;
                    }
                    acc
                })
                .collect();
            let post = if li + 1 == layers.len() {
                pre.clone()
            } else {
                pre.iter().map(|&a| self.activation.apply(a)).collect()
            };
            trace.push((pre, post));
        }
        trace
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x.len())?;
        Ok(self.forward_trace(x).pop().unwrap().1)
    }

    /// Scalar output and its gradient with respect to the input.
    pub fn input_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_input(x.len())?;
        self.check_scalar_head()?;
        let layers = self.layers();
        let trace = self.forward_trace(x);
        let last = layers.last().unwrap();
        let mut g: Vec<f64> = self.params[last.row(0)].to_vec();
        for li in (0..layers.len() - 1).rev() {
            let layer = &layers[li];
            let (pre, post) = &trace[li];
            let delta: Vec<f64> = (0..layer.fan_out)
                .map(|j| g[j] * self.activation.slope(pre[j], post[j]))
                .collect();
            g = (0..layer.fan_in)
                .map(|i| {
                    let mut acc = 0.0;
                    for (j, d) in delta.iter().enumerate() {
                        acc += self.params[layer.weight(j, i)] * d;
                    }
                    acc
                })
                .collect();
        }
        Ok((trace.last().unwrap().1[0], g))
    }

    /// Registers every parameter as a leaf of `tape`.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        tape.leaves(&self.params)
    }

    fn activate_tape(&self, tape: &mut Tape, a: Var) -> Var {
        match self.activation {
            Activation::Tanh => tape.tanh(a),
            Activation::Softplus => tape.softplus(a),
        }
    }

    fn layer_tape(&self, tape: &mut Tape, params: &[Var], layer: &Layer, input: &[Var]) -> Vec<Var> {
        (0..layer.fan_out)
            .map(|o| tape.affine(Some(params[layer.bias(o)]), &params[layer.row(o)], input))
            .collect()
    }

    fn trace_tape(&self, tape: &mut Tape, params: &[Var], first: Vec<Var>) -> Vec<(Vec<Var>, Vec<Var>)> {
        let layers = self.layers();
        let mut trace: Vec<(Vec<Var>, Vec<Var>)> = Vec::with_capacity(layers.len());
        let mut pre = first;
        for li in 0..layers.len() {
            if li > 0 {
                pre = self.layer_tape(tape, params, &layers[li], &trace[li - 1].1);
            }
            let post = if li + 1 == layers.len() {
                pre.clone()
            } else {
                pre.iter().map(|&a| self.activate_tape(tape, a)).collect()
            };
            trace.push((std::mem::take(&mut pre), post));
        }
        trace
    }

    /// Records the forward pass with parameters `params` (from [`Mlp::register`]).
    pub fn forward_tape(&self, tape: &mut Tape, params: &[Var], x: &[Var]) -> Result<Vec<Var>> {
        self.check_input(x.len())?;
        self.check_param_vars(params)?;
        let first = self.layer_tape(tape, params, &self.layers()[0], x);
        Ok(self.trace_tape(tape, params, first).pop().unwrap().1)
    }

    /// [`Mlp::forward_tape`] for a constant input vector.
    pub fn forward_tape_const(&self, tape: &mut Tape, params: &[Var], x: &[f64]) -> Result<Vec<Var>> {
        self.check_input(x.len())?;
        self.check_param_vars(params)?;
        let layer = self.layers()[0];
        let first = (0..layer.fan_out)
            .map(|o| tape.affine_const(Some(params[layer.bias(o)]), &params[layer.row(o)], x))
            .collect();
        Ok(self.trace_tape(tape, params, first).pop().unwrap().1)
    }

    /// Records the scalar output and its input gradient. The gradient nodes are
    /// built from the recorded forward pass, so a later reverse sweep
    /// differentiates through them with respect to both `x` and the parameters.
    pub fn input_gradient_tape(&self, tape: &mut Tape, params: &[Var], x: &[Var]) -> Result<(Var, Vec<Var>)> {
        self.check_input(x.len())?;
        self.check_scalar_head()?;
        self.check_param_vars(params)?;
        let layers = self.layers();
        let first = self.layer_tape(tape, params, &layers[0], x);
        let trace = self.trace_tape(tape, params, first);
        let last = layers.last().unwrap();
        let mut g: Vec<Var> = params[last.row(0)].to_vec();
        for li in (0..layers.len() - 1).rev() {
            let layer = &layers[li];
            let (pre, post) = &trace[li];
            let delta: Vec<Var> = (0..layer.fan_out)
                .map(|j| {
                    let slope = match self.activation {
                        Activation::Tanh => {
                            let sq = tape.square(post[j]);
                            let neg = tape.neg(sq);
                            tape.offset(neg, 1.0)
                        }
                        Activation::Softplus => tape.sigmoid(pre[j]),
                    };
                    tape.mul(g[j], slope)
                })
                .collect();
            let mut column = Vec::with_capacity(layer.fan_out);
            g = (0..layer.fan_in)
                .map(|i| {
                    column.clear();
                    column.extend((0..layer.fan_out).map(|j| params[layer.weight(j, i)]));
                    tape.affine(None, &column, &delta)
                })
                .collect();
        }
        Ok((trace.last().unwrap().1[0], g))
    }

    /// Largest singular value of each weight matrix.
    pub fn operator_norms(&self) -> Vec<f64> {
        self.layers()
            .iter()
            .map(|l| {
                let m = nalgebra::DMatrix::from_row_slice(
                    l.fan_out,
                    l.fan_in,
                    &self.params[l.offset..l.offset + l.fan_in * l.fan_out],
                );
                m.singular_values().max()
            })
            .collect()
    }

    /// Serializes as `HGW1`, the width count and widths (u32 LE), then the
    /// parameters (f64 LE) in layer order.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + 4 * self.widths.len() + 8 * self.params.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(self.widths.len() as u32).to_le_bytes());
        for &w in &self.widths {
            out.extend_from_slice(&(w as u32).to_le_bytes());
        }
        for &p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8], activation: Activation) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| Error::Shape("truncated checkpoint".into()))?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Shape("not an HGW1 checkpoint".into()));
        }
        let read_u32 = |r: &mut &[u8]| -> Result<u32> {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(|_| Error::Shape("truncated checkpoint header".into()))?;
            Ok(u32::from_le_bytes(b))
        };
        let count = read_u32(&mut r)? as usize;
        if count > 64 {
            return Err(Error::Shape(format!("implausible layer count {count}")));
        }
        let widths = (0..count)
            .map(|_| read_u32(&mut r).map(|w| w as usize))
            .collect::<Result<Vec<_>>>()?;
        Self::check_widths(&widths)?;
        let n = Self::param_count(&widths);
        if r.len() != 8 * n {
            return Err(Error::Shape(format!(
                "checkpoint body has {} bytes, expected {}",
                r.len(),
                8 * n
            )));
        }
        let params = r
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::from_params(&widths, activation, params)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_checkpoint_bytes())?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path, activation: Activation) -> Result<Self> {
        Self::from_checkpoint_bytes(&std::fs::read(path)?, activation)
    }
}
