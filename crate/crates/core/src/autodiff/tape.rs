use std::sync::atomic::{AtomicU32, Ordering};

use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU32 = AtomicU32::new(1);

fn fresh_id() -> u32 {
    NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed)
}

/// Handle to a node on a specific [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    index: u32,
    tape: u32,
}

impl Var {
    pub fn index(self) -> usize {
        self.index as usize
    }
}

/// Primitive recorded for a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Op {
    Leaf,
    Add,
    Sub,
    Mul,
    Neg,
    Scale,
    Offset,
    Square,
    Tanh,
    Softplus,
    Sigmoid,
    Ln,
    Exp,
    Abs,
    Clamp,
    Sum,
    Affine,
}

/// Append-only Wengert list. Each node stores its value, its parents and the
/// local partial derivative with respect to each parent.
#[derive(Debug)]
pub struct Tape {
    id: u32,
    ops: Vec<Op>,
    values: Vec<f64>,
    edge_end: Vec<u32>,
    parents: Vec<u32>,
    partials: Vec<f64>,
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            id: fresh_id(),
            ops: Vec::new(),
            values: Vec::new(),
            edge_end: Vec::new(),
            parents: Vec::new(),
            partials: Vec::new(),
        }
    }

    /// Drops every node but keeps the allocations. Outstanding [`Var`]s are
    /// invalidated.
    pub fn clear(&mut self) {
        self.id = fresh_id();
        self.ops.clear();
        self.values.clear();
        self.edge_end.clear();
        self.parents.clear();
        self.partials.clear();
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.parents.len()
    }

    pub fn op(&self, v: Var) -> Op {
        self.ops[v.index()]
    }

    pub fn value(&self, v: Var) -> f64 {
        debug_assert_eq!(v.tape, self.id, "variable from another tape");
        self.values[v.index()]
    }

    pub fn values(&self, vs: &[Var]) -> Vec<f64> {
        vs.iter().map(|&v| self.value(v)).collect()
    }

    fn push(&mut self, op: Op, value: f64, edges: &[(Var, f64)]) -> Var {
        for &(parent, partial) in edges {
            debug_assert_eq!(parent.tape, self.id, "variable from another tape");
            self.parents.push(parent.index);
            self.partials.push(partial);
        }
        self.finish(op, value)
    }

    fn finish(&mut self, op: Op, value: f64) -> Var {
        let index = u32::try_from(self.values.len()).expect("tape exceeds u32 nodes");
        self.ops.push(op);
        self.values.push(value);
        self.edge_end.push(self.parents.len() as u32);
        Var { index, tape: self.id }
    }

    pub fn leaf(&mut self, value: f64) -> Var {
        self.push(Op::Leaf, value, &[])
    }

    pub fn leaves(&mut self, values: &[f64]) -> Vec<Var> {
        values.iter().map(|&v| self.leaf(v)).collect()
    }

    /// A new leaf carrying `v`'s value; gradients stop here.
    pub fn detach(&mut self, v: Var) -> Var {
        let value = self.value(v);
        self.leaf(value)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) + self.value(b);
        self.push(Op::Add, value, &[(a, 1.0), (b, 1.0)])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a) - self.value(b);
        self.push(Op::Sub, value, &[(a, 1.0), (b, -1.0)])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        self.push(Op::Mul, x * y, &[(a, y), (b, x)])
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let value = -self.value(a);
        self.push(Op::Neg, value, &[(a, -1.0)])
    }

    /// `c · a` for a constant `c`.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = c * self.value(a);
        self.push(Op::Scale, value, &[(a, c)])
    }

    /// `a + c` for a constant `c`.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a) + c;
        self.push(Op::Offset, value, &[(a, 1.0)])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push(Op::Square, x * x, &[(a, 2.0 * x)])
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let y = self.value(a).tanh();
        self.push(Op::Tanh, y, &[(a, 1.0 - y * y)])
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push(Op::Softplus, softplus(x), &[(a, sigmoid(x))])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let y = sigmoid(self.value(a));
        self.push(Op::Sigmoid, y, &[(a, y * (1.0 - y))])
    }

    pub fn ln(&mut self, a: Var) -> Var {
        let x = self.value(a);
        self.push(Op::Ln, x.ln(), &[(a, 1.0 / x)])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let y = self.value(a).exp();
        self.push(Op::Exp, y, &[(a, y)])
    }

    /// `|a|`, with subgradient 0 at the origin.
    pub fn abs(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let slope = if x > 0.0 {
            1.0
        } else if x < 0.0 {
            -1.0
        } else {
            0.0
        };
        self.push(Op::Abs, x.abs(), &[(a, slope)])
    }

    /// Clamps to `[lo, hi]`; the derivative is zero where the bound is active.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let x = self.value(a);
        let inside = (lo..=hi).contains(&x);
        self.push(Op::Clamp, x.clamp(lo, hi), &[(a, if inside { 1.0 } else { 0.0 })])
    }

    pub fn sum(&mut self, xs: &[Var]) -> Var {
        let mut acc = 0.0;
        for &x in xs {
            acc += self.value(x);
            self.parents.push(x.index);
            self.partials.push(1.0);
        }
        self.finish(Op::Sum, acc)
    }

    /// `bias + Σ wᵢ xᵢ`, accumulated left to right starting from the bias.
    pub fn affine(&mut self, bias: Option<Var>, weights: &[Var], inputs: &[Var]) -> Var {
        debug_assert_eq!(weights.len(), inputs.len());
        let mut acc = match bias {
            Some(b) => {
                self.parents.push(b.index);
                self.partials.push(1.0);
                self.value(b)
            }
            None => 0.0,
        };
        for (&w, &x) in weights.iter().zip(inputs) {
            let (wv, xv) = (self.values[w.index()], self.values[x.index()]);
            acc += wv * xv;
            self.parents.push(w.index);
            self.partials.push(xv);
            self.parents.push(x.index);
            self.partials.push(wv);
        }
        self.finish(Op::Affine, acc)
    }

    /// [`Tape::affine`] with constant inputs, which need no edges.
    pub fn affine_const(&mut self, bias: Option<Var>, weights: &[Var], inputs: &[f64]) -> Var {
        debug_assert_eq!(weights.len(), inputs.len());
        let mut acc = match bias {
            Some(b) => {
                self.parents.push(b.index);
                self.partials.push(1.0);
                self.value(b)
            }
            None => 0.0,
        };
        for (&w, &xv) in weights.iter().zip(inputs) {
            acc += self.values[w.index()] * xv;
            self.parents.push(w.index);
            self.partials.push(xv);
        }
        self.finish(Op::Affine, acc)
    }

    fn check(&self, v: Var) -> Result<()> {
        if v.tape != self.id || v.index() >= self.len() {
            return Err(Error::Tape(format!(
                "node {} does not belong to this tape",
                v.index
            )));
        }
        Ok(())
    }

    /// Adjoints `∂loss/∂node` for every node, by a single reverse sweep.
    pub fn gradient(&self, loss: Var) -> Result<Vec<f64>> {
        self.check(loss)?;
        let mut adj = vec![0.0; loss.index() + 1];
        adj[loss.index()] = 1.0;
        for i in (0..=loss.index()).rev() {
            let a = adj[i];
            if a == 0.0 {
                continue;
            }
            let start = if i == 0 { 0 } else { self.edge_end[i - 1] as usize };
            let end = self.edge_end[i] as usize;
            for e in start..end {
                adj[self.parents[e] as usize] += a * self.partials[e];
            }
        }
        Ok(adj)
    }

    /// `∂loss/∂v` for each requested variable.
    pub fn gradient_wrt(&self, loss: Var, vars: &[Var]) -> Result<Vec<f64>> {
        let adj = self.gradient(loss)?;
        vars.iter()
            .map(|&v| {
                self.check(v)?;
                Ok(adj.get(v.index()).copied().unwrap_or(0.0))
            })
            .collect()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}
