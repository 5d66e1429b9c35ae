//! Multi-domain text classification with shared and private convolutional
//! encoders, domain-adversarial (gradient reversal) and domain-generative
//! training, and an evaluation harness for in- and out-of-domain accuracy.

pub mod data;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod layers;
pub mod model;
pub mod op;
pub mod optim;
pub mod persist;
pub mod tensor;

pub use error::{Error, Result};
pub use op::{DiffOp, Mode, OpRng};
pub use tensor::Tensor;
