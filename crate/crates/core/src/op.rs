//! The differentiable-operation contract shared by every layer.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::tensor::Tensor;

/// RNG used by stochastic operations. Always passed in explicitly so a
/// forward pass is a pure function of its inputs and this state.
pub type OpRng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Gradients returned by [`DiffOp::backward`]. `params` follows the order of
/// [`DiffOp::params`]; `input` is `None` for non-differentiable inputs such as
/// token ids.
#[derive(Debug, Clone)]
pub struct OpGrads {
    pub input: Option<Tensor>,
    pub params: Vec<Tensor>,
}

pub trait DiffOp {
    type Input: ?Sized;
    type Cache;

    fn forward(&self, input: &Self::Input, mode: Mode, rng: &mut OpRng)
        -> Result<(Tensor, Self::Cache)>;

    fn backward(&self, cache: &Self::Cache, grad_out: &Tensor) -> Result<OpGrads>;

    fn params(&self) -> Vec<&Tensor>;

    fn params_mut(&mut self) -> Vec<&mut Tensor>;
}
