//! Neural building blocks: embedding lookup, convolution bank with
//! max-over-time pooling, dropout, linear heads and gradient reversal.

mod conv;
mod dropout;
mod embedding;
mod grl;
mod linear;
mod loss;

pub use conv::{ConvBank, ConvCache, ConvSpec};
pub use dropout::{dropout_apply, Dropout, DropoutMask};
pub use embedding::{Embedding, EMBED_INIT_RANGE};
pub use grl::GradientReversal;
pub use linear::{LinearCache, LinearHead};
pub use loss::SoftmaxCrossEntropy;

use rand::Rng;

use crate::tensor::Tensor;

/// Glorot-uniform initialisation in `±sqrt(6 / (fan_in + fan_out))`.
pub(crate) fn glorot(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(shape, bound, rng)
}

pub(crate) fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::from_vec(shape, data).expect("layer shapes are non-empty")
}
