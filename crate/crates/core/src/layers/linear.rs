use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::op::{DiffOp, Mode, OpGrads, OpRng};
use crate::tensor::Tensor;

/// Affine map `y = x·W + b` over a single input vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    pub weights: Tensor,
    pub bias: Tensor,
}

#[derive(Debug, Clone)]
pub struct LinearCache {
    input: Vec<f64>,
}

impl LinearHead {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        LinearHead {
            weights: super::glorot(&[inputs, outputs], inputs, outputs, rng),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        LinearHead {
            weights: Tensor::zeros(&[inputs, outputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn outputs(&self) -> usize {
        self.bias.len()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(Error::Shape {
                op: "linear",
                left: vec![x.len()],
                right: self.weights.shape().to_vec(),
            });
        }
        let n = self.outputs();
        let mut y = self.bias.data().to_vec();
        let w = self.weights.data();
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, wv) in y.iter_mut().zip(&w[i * n..(i + 1) * n]) {
                *o += xi * wv;
            }
        }
        Ok(y)
    }

    /// Accumulates parameter gradients into `grads` and returns the gradient
    /// with respect to the input.
    pub fn backward_into(&self, input: &[f64], grad_out: &[f64], grads: &mut LinearHead) -> Vec<f64> {
        let n = self.outputs();
        let w = self.weights.data();
        let gw = grads.weights.data_mut();
        let mut gx = vec![0.0; input.len()];
        for (i, &xi) in input.iter().enumerate() {
            let row = &w[i * n..(i + 1) * n];
            let grow = &mut gw[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for j in 0..n {
                grow[j] += xi * grad_out[j];
                acc += row[j] * grad_out[j];
            }
            gx[i] = acc;
        }
        for (b, g) in grads.bias.data_mut().iter_mut().zip(grad_out) {
            *b += g;
        }
        gx
    }
}

impl DiffOp for LinearHead {
    type Input = Tensor;
    type Cache = LinearCache;

    fn forward(&self, x: &Tensor, _mode: Mode, _rng: &mut OpRng) -> Result<(Tensor, LinearCache)> {
        let y = self.apply(x.data())?;
        Ok((
            Tensor::vector(&y),
            LinearCache {
                input: x.data().to_vec(),
            },
        ))
    }

    fn backward(&self, cache: &LinearCache, grad_out: &Tensor) -> Result<OpGrads> {
        let mut g = LinearHead::zeros(self.inputs(), self.outputs());
        let gx = self.backward_into(&cache.input, grad_out.data(), &mut g);
        Ok(OpGrads {
            input: Some(Tensor::vector(&gx)),
            params: vec![g.weights, g.bias],
        })
    }

    fn params(&self) -> Vec<&Tensor> {
        vec![&self.weights, &self.bias]
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weights, &mut self.bias]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_op, check_op_input};
    use rand::SeedableRng;

    #[test]
    fn output_is_affine() {
        let head = LinearHead {
            weights: Tensor::matrix(&[&[1.0, 0.0, 2.0], &[0.5, -1.0, 1.0]]),
            bias: Tensor::vector(&[0.1, 0.2, 0.3]),
        };
        let y = head.apply(&[2.0, 4.0]).unwrap();
        assert_eq!(y, vec![4.1, -3.8, 8.3]);
        assert!(matches!(head.apply(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn glorot_bound_and_zero_bias() {
        let head = LinearHead::new(10, 6, &mut OpRng::seed_from_u64(0));
        let bound = (6.0f64 / 16.0).sqrt();
        assert!(head.weights.data().iter().all(|w| w.abs() <= bound));
        assert!(head.bias.data().iter().all(|&b| b == 0.0));
    }

    #[test]
    fn gradcheck() {
        let mut rng = OpRng::seed_from_u64(11);
        let mut head = LinearHead::new(4, 3, &mut rng);
        let x = crate::gradcheck::random_projection(&[4], &mut rng);
        assert!(check_op(&mut head, &x, Mode::Train, 5).unwrap() <= 1e-6);
        assert!(check_op_input(&head, &x, Mode::Train, 5).unwrap() <= 1e-6);
    }
}
