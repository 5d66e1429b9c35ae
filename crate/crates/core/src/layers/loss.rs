use crate::error::Result;
use crate::op::{DiffOp, Mode, OpGrads, OpRng};
use crate::tensor::{cross_entropy, softmax_slice, Tensor};

/// Softmax followed by cross-entropy against a fixed gold class; the output
/// is the scalar loss.
#[derive(Debug, Clone, Copy)]
pub struct SoftmaxCrossEntropy {
    pub gold: usize,
}

impl SoftmaxCrossEntropy {
    /// Loss and `∂loss/∂logits = p - onehot(gold)`.
    pub fn loss_and_grad(logits: &[f64], gold: usize) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let probs = softmax_slice(logits);
        let loss = cross_entropy(&probs, gold)?;
        let mut grad = probs.clone();
        grad[gold] -= 1.0;
        Ok((loss, grad, probs))
    }
}

impl DiffOp for SoftmaxCrossEntropy {
    type Input = Tensor;
    type Cache = Vec<f64>;

    fn forward(&self, logits: &Tensor, _mode: Mode, _rng: &mut OpRng) -> Result<(Tensor, Vec<f64>)> {
        let (loss, grad, _) = Self::loss_and_grad(logits.data(), self.gold)?;
        Ok((Tensor::vector(&[loss]), grad))
    }

    fn backward(&self, grad: &Vec<f64>, grad_out: &Tensor) -> Result<OpGrads> {
        let g = grad_out.data()[0];
        Ok(OpGrads {
            input: Some(Tensor::vector(&grad.iter().map(|v| v * g).collect::<Vec<_>>())),
            params: Vec::new(),
        })
    }

    fn params(&self) -> Vec<&Tensor> {
        Vec::new()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        Vec::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::check_op_input;

    #[test]
    fn gradcheck() {
        let op = SoftmaxCrossEntropy { gold: 2 };
        let x = Tensor::vector(&[0.3, -1.2, 0.8, 2.0]);
        assert!(check_op_input(&op, &x, Mode::Eval, 0).unwrap() <= 1e-6);
    }

    #[test]
    fn zero_logits_give_ln_k() {
        let (loss, grad, _) = SoftmaxCrossEntropy::loss_and_grad(&[0.0; 3], 0).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-15);
        assert!((grad[0] + 2.0 / 3.0).abs() < 1e-15);
    }
}
