//! Scalar reverse-mode differentiation and dense networks.
//!
//! Second-order quantities (parameter gradients of losses built from input
//! gradients) come from recording the network's own backward pass as tape
//! nodes: [`Mlp::input_gradient_tape`] returns `∂out/∂x` as tape variables,
//! and a reverse sweep from any loss built on them differentiates through it.

mod adam;
mod mlp;
mod tape;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use mlp::{Activation, Mlp, CHECKPOINT_MAGIC};
pub use tape::{Op, Tape, Var};
pub(crate) use tape::sigmoid;

use rayon::prelude::*;

use crate::error::Result;

/// Evaluates `f` once per sample on its own tape and sums the returned
/// gradients in sample order, so the result does not depend on scheduling.
pub fn summed_gradients<T, F>(n: usize, width: usize, f: F) -> Result<(Vec<f64>, Vec<T>)>
where
    T: Send,
    F: Fn(&mut Tape, usize) -> Result<(Vec<f64>, T)> + Sync,
{
    let per_sample: Vec<(Vec<f64>, T)> = (0..n)
        .into_par_iter()
        .map_init(Tape::new, |tape, i| {
            tape.clear();
            f(tape, i)
        })
        .collect::<Result<_>>()?;
    let mut total = vec![0.0; width];
    let mut extras = Vec::with_capacity(n);
    for (g, extra) in per_sample {
        for (t, v) in total.iter_mut().zip(&g) {
            *t += v;
        }
        extras.push(extra);
    }
    Ok((total, extras))
}
