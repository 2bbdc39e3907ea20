//! Reverse-mode automatic differentiation over dense `f64` arrays, with the
//! layers and optimizer used by every network in the crate.

mod adam;
mod checkpoint;
mod graph;
mod gru;
mod init;
mod linear;
mod tensor;

pub use adam::AdamState;
pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use graph::{sigmoid, softplus, Gradients, Graph, Var};
pub use gru::{gru_sequence, gru_step, GruCellParams, GruVars};
pub use init::uniform_fan_in;
pub use linear::{Linear, LinearVars};
pub use tensor::Tensor;

/// Global L2 norm over a set of gradient tensors.
pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads
        .iter()
        .flat_map(|g| g.data())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` in place so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}
