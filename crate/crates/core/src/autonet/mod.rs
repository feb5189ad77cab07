//! Trainable codec: dense encoder/decoder, a small reverse-mode tape, the
//! straight-through modem node, MSE loss, Adam and checkpoints.

pub mod adam;
pub mod checkpoint;
pub mod matrix;
pub mod network;
pub mod tape;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, CheckpointMode};
pub use matrix::Matrix;
pub use network::{
    decode, encode, forward_batch, ste_forward_backward, Architecture, BatchPass, CodecParams,
    Dense, Link,
};
pub use tape::{Gradients, NodeId, Tape};

use crate::error::{Error, Result};
use crate::image::ImageTensor;

/// Batch mean of per-image pixel MSE.
pub fn mse_loss(x: &[ImageTensor], x_hat: &[ImageTensor]) -> Result<f64> {
    if x.len() != x_hat.len() || x.is_empty() {
        return Err(Error::arg(format!(
            "batches of {} and {} images",
            x.len(),
            x_hat.len()
        )));
    }
    let mut total = 0.0;
    for (a, b) in x.iter().zip(x_hat) {
        if a.shape() != b.shape() {
            return Err(Error::arg("image shapes differ"));
        }
        let se: f64 = a
            .pixels()
            .iter()
            .zip(b.pixels())
            .map(|(p, q)| (p - q) * (p - q))
            .sum();
        total += se / a.len() as f64;
    }
    Ok(total / x.len() as f64)
}
