use rand::Rng;

use crate::error::{Error, Result};
use crate::op::{DiffOp, Mode, OpGrads, OpRng};
use crate::tensor::Tensor;

/// Inverted dropout: surviving entries are scaled by `1 / (1 - rate)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dropout {
    rate: f64,
}

impl Dropout {
    pub fn new(rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {rate}")));
        }
        Ok(Dropout { rate })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    /// Applies dropout in place and returns the keep mask (entries 0 or 1).
    /// One uniform draw is consumed per entry in train mode, whatever the rate.
    pub fn apply_in_place(&self, x: &mut [f64], mode: Mode, rng: &mut impl Rng) -> DropoutMask {
        match mode {
            Mode::Eval => DropoutMask {
                keep: vec![1.0; x.len()],
                scale: 1.0,
            },
            Mode::Train => {
                let scale = 1.0 / (1.0 - self.rate);
                let keep = x
                    .iter_mut()
                    .map(|v| {
                        let keep = rng.gen::<f64>() >= self.rate;
                        if keep {
                            *v *= scale;
                            1.0
                        } else {
                            *v = 0.0;
                            0.0
                        }
                    })
                    .collect();
                DropoutMask { keep, scale }
            }
        }
    }

    pub fn backward_in_place(&self, grad: &mut [f64], mask: &DropoutMask) {
        for (g, m) in grad.iter_mut().zip(&mask.keep) {
            *g *= m * mask.scale;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMask {
    pub keep: Vec<f64>,
    /// `1 / (1 - rate)` in train mode, 1 in eval mode.
    pub scale: f64,
}

/// Functional form: returns the dropped tensor together with its mask.
pub fn dropout_apply(x: &Tensor, rate: f64, rng: &mut impl Rng, mode: Mode) -> Result<(Tensor, Tensor)> {
    let layer = Dropout::new(rate)?;
    let mut out = x.clone();
    let mask = layer.apply_in_place(out.data_mut(), mode, rng);
    let mask = Tensor::from_vec(x.shape(), mask.keep)?;
    Ok((out, mask))
}

impl DiffOp for Dropout {
    type Input = Tensor;
    type Cache = DropoutMask;

    fn forward(&self, x: &Tensor, mode: Mode, rng: &mut OpRng) -> Result<(Tensor, DropoutMask)> {
        let mut out = x.clone();
        let mask = self.apply_in_place(out.data_mut(), mode, rng);
        Ok((out, mask))
    }

    fn backward(&self, mask: &DropoutMask, grad_out: &Tensor) -> Result<OpGrads> {
        let mut g = grad_out.clone();
        self.backward_in_place(g.data_mut(), mask);
        Ok(OpGrads {
            input: Some(g),
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
    use rand::SeedableRng;

    #[test]
    fn eval_mode_is_identity() {
        let x = Tensor::vector(&[1.0, -2.0, 3.5]);
        let (y, mask) = dropout_apply(&x, 0.5, &mut OpRng::seed_from_u64(0), Mode::Eval).unwrap();
        assert_eq!(y, x);
        assert!(mask.data().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn zero_rate_train_is_identity() {
        let x = Tensor::vector(&[1.0, -2.0, 3.5]);
        let (y, mask) = dropout_apply(&x, 0.0, &mut OpRng::seed_from_u64(0), Mode::Train).unwrap();
        assert_eq!(y, x);
        assert!(mask.data().iter().all(|&m| m == 1.0));
    }

    #[test]
    fn rate_out_of_range() {
        assert!(matches!(Dropout::new(1.0), Err(Error::Config(_))));
        assert!(matches!(Dropout::new(-0.1), Err(Error::Config(_))));
    }

    #[test]
    fn expectation_matches_input() {
        // 1e5 scalar draws at p = 0.5: each draw of output/input is 0 or 2,
        // variance 1, so the sample mean has σ ≈ 0.0032 and 0.02 is > 6σ.
        let n = 100_000;
        let x = Tensor::filled(&[n], 1.7);
        let (y, _) = dropout_apply(&x, 0.5, &mut OpRng::seed_from_u64(42), Mode::Train).unwrap();
        let mean = y.data().iter().map(|v| v / 1.7).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() <= 0.02, "{mean}");
        let sigma = (1.0 / n as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * sigma, "{mean}");
    }

    #[test]
    fn gradcheck_with_fixed_mask() {
        let x = Tensor::vector(&[0.3, -1.0, 2.0, 0.7, -0.4, 1.1]);
        let layer = Dropout::new(0.5).unwrap();
        assert!(check_op_input(&layer, &x, Mode::Train, 9).unwrap() <= 1e-6);
        assert!(check_op_input(&layer, &x, Mode::Eval, 9).unwrap() <= 1e-6);
    }
}
