use crate::tensor::Tensor;

/// Identity on the way forward; scales the incoming gradient by `-lambda` on
/// the way back.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientReversal {
    pub lambda: f64,
}

impl GradientReversal {
    pub fn new(lambda: f64) -> Self {
        assert!(lambda >= 0.0, "reversal weight must be nonnegative");
        GradientReversal { lambda }
    }

    pub fn forward(&self, x: &Tensor) -> Tensor {
        x.clone()
    }

    pub fn backward(&self, grad: &Tensor) -> Tensor {
        let mut g = grad.clone();
        g.scale(-self.lambda);
        g
    }

    pub fn backward_vec(&self, grad: &[f64]) -> Vec<f64> {
        grad.iter().map(|g| -self.lambda * g).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_is_bit_identical() {
        let x = Tensor::vector(&[1.5, -2.0]);
        let grl = GradientReversal::new(0.3);
        let y = grl.forward(&x);
        assert_eq!(y.data(), &[1.5, -2.0]);
        assert_eq!(grl.forward(&y), y);
    }

    #[test]
    fn backward_scales_by_negative_lambda() {
        let g = GradientReversal::new(1e-3).backward(&Tensor::vector(&[2.0]));
        assert_eq!(g.data(), &[-0.002]);
        let z = GradientReversal::new(0.0).backward(&Tensor::vector(&[3.0, -1.0]));
        assert!(z.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn double_backward_scales_by_lambda_squared() {
        let grl = GradientReversal::new(0.5);
        let g = Tensor::vector(&[4.0, -8.0]);
        assert_eq!(grl.backward(&grl.backward(&g)).data(), &[1.0, -2.0]);
    }
}
