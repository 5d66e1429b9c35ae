//! Central finite differences: the oracle every analytic backward pass is
//! checked against.

mod suite;

pub use suite::{check_network, run_suite, ComponentResult, SuiteConfig, SuiteSizes, KINK_MARGIN, SUITE_TOLERANCE};

use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::op::{DiffOp, Mode, OpRng};
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-5;

/// Denominator floor for [`relative_error`], so entries whose true gradient is
/// numerically zero are compared in absolute terms.
pub const REL_ERR_FLOOR: f64 = 1e-6;

/// Central-difference gradient of a scalar-valued function of `points`.
///
/// `f` must return a one-element tensor; anything else is a contract error.
pub fn finite_diff_grad<F>(mut f: F, points: &[Tensor], eps: f64) -> Result<Vec<Tensor>>
where
    F: FnMut(&[Tensor]) -> Result<Tensor>,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(Error::Config(format!("finite-difference eps must be > 0, got {eps}")));
    }
    let mut work: Vec<Tensor> = points.to_vec();
    let mut eval = |work: &[Tensor]| -> Result<f64> {
        let out = f(work)?;
        if out.len() != 1 {
            return Err(Error::Contract(format!(
                "wrapped function must be scalar, got shape {:?}",
                out.shape()
            )));
        }
        Ok(out.data()[0])
    };
    let mut grads = Vec::with_capacity(points.len());
    for p in 0..points.len() {
        let mut g = points[p].zeros_like();
        for i in 0..points[p].len() {
            let orig = work[p].data()[i];
            work[p].data_mut()[i] = orig + eps;
            let plus = eval(&work)?;
            work[p].data_mut()[i] = orig - eps;
            let minus = eval(&work)?;
            work[p].data_mut()[i] = orig;
            g.data_mut()[i] = (plus - minus) / (2.0 * eps);
        }
        grads.push(g);
    }
    Ok(grads)
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(REL_ERR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Largest entrywise [`relative_error`] between two gradient lists.
pub fn max_relative_error(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n.data()))
        .map(|(&a, &n)| relative_error(a, n))
        .fold(0.0, f64::max)
}

/// Random projection used to turn a tensor-valued op into a scalar.
pub fn random_projection(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .expect("projection shape is non-empty")
}

fn dot(a: &Tensor, b: &Tensor) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Checks an op's parameter gradients (and input gradient when `input_grad`
/// is set and the op produces one) against finite differences of
/// `⟨op(x), r⟩` for a random projection `r`. Every forward call reuses
/// `seed`, so stochastic ops see the same mask throughout.
///
/// Returns the maximum relative error.
pub fn check_op<O>(op: &mut O, input: &O::Input, mode: Mode, seed: u64) -> Result<f64>
where
    O: DiffOp,
{
    let (out, cache) = op.forward(input, mode, &mut OpRng::seed_from_u64(seed))?;
    let proj = random_projection(out.shape(), &mut OpRng::seed_from_u64(seed ^ 0x9e37_79b9));
    let analytic = op.backward(&cache, &proj)?;

    let points: Vec<Tensor> = op.params().into_iter().cloned().collect();
    let numeric = finite_diff_grad(
        |ps| {
            for (dst, src) in op.params_mut().into_iter().zip(ps) {
                *dst = src.clone();
            }
            let (o, _) = op.forward(input, mode, &mut OpRng::seed_from_u64(seed))?;
            Ok(Tensor::vector(&[dot(&o, &proj)]))
        },
        &points,
        DEFAULT_EPS,
    )?;
    for (dst, src) in op.params_mut().into_iter().zip(&points) {
        *dst = src.clone();
    }
    Ok(max_relative_error(&analytic.params, &numeric))
}

/// Input-gradient counterpart of [`check_op`] for ops over real tensors.
pub fn check_op_input<O>(op: &O, input: &Tensor, mode: Mode, seed: u64) -> Result<f64>
where
    O: DiffOp<Input = Tensor>,
{
    let (out, cache) = op.forward(input, mode, &mut OpRng::seed_from_u64(seed))?;
    let proj = random_projection(out.shape(), &mut OpRng::seed_from_u64(seed ^ 0x9e37_79b9));
    let analytic = op
        .backward(&cache, &proj)?
        .input
        .ok_or_else(|| Error::Contract("op has no input gradient".into()))?;
    let numeric = finite_diff_grad(
        |xs| {
            let (o, _) = op.forward(&xs[0], mode, &mut OpRng::seed_from_u64(seed))?;
            Ok(Tensor::vector(&[dot(&o, &proj)]))
        },
        std::slice::from_ref(input),
        DEFAULT_EPS,
    )?;
    Ok(max_relative_error(&[analytic], &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::matmul;

    #[test]
    fn square_at_three() {
        let g = finite_diff_grad(
            |x| Ok(Tensor::vector(&[x[0].data()[0].powi(2)])),
            &[Tensor::vector(&[3.0])],
            1e-5,
        )
        .unwrap();
        assert!((g[0].data()[0] - 6.0).abs() <= 1e-8);
    }

    #[test]
    fn constant_function_has_zero_gradient() {
        let pts = [Tensor::vector(&[1.0, -2.0, 0.5]), Tensor::zeros(&[2, 2])];
        let g = finite_diff_grad(|_| Ok(Tensor::vector(&[4.2])), &pts, 1e-5).unwrap();
        assert!(g.iter().all(|t| t.data().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn non_scalar_output_is_a_contract_error() {
        let err = finite_diff_grad(|x| Ok(x[0].clone()), &[Tensor::vector(&[1.0, 2.0])], 1e-5);
        assert!(matches!(err, Err(Error::Contract(_))));
        let err = finite_diff_grad(|x| Ok(x[0].clone()), &[Tensor::vector(&[1.0])], 0.0);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn matmul_oracle_self_test() {
        // d<AB, R>/dA = R Bᵀ, d<AB, R>/dB = Aᵀ R
        let mut rng = OpRng::seed_from_u64(7);
        for _ in 0..20 {
            let a = random_projection(&[2, 2], &mut rng);
            let b = random_projection(&[2, 2], &mut rng);
            let r = random_projection(&[2, 2], &mut rng);
            let numeric = finite_diff_grad(
                |ps| {
                    let c = matmul(&ps[0], &ps[1])?;
                    Ok(Tensor::vector(&[dot(&c, &r)]))
                },
                &[a.clone(), b.clone()],
                DEFAULT_EPS,
            )
            .unwrap();
            let (ad, bd, rd) = (a.data(), b.data(), r.data());
            let ga = Tensor::from_vec(
                &[2, 2],
                vec![
                    rd[0] * bd[0] + rd[1] * bd[1],
                    rd[0] * bd[2] + rd[1] * bd[3],
                    rd[2] * bd[0] + rd[3] * bd[1],
                    rd[2] * bd[2] + rd[3] * bd[3],
                ],
            )
            .unwrap();
            let gb = Tensor::from_vec(
                &[2, 2],
                vec![
                    ad[0] * rd[0] + ad[2] * rd[2],
                    ad[0] * rd[1] + ad[2] * rd[3],
                    ad[1] * rd[0] + ad[3] * rd[2],
                    ad[1] * rd[1] + ad[3] * rd[3],
                ],
            )
            .unwrap();
            assert!(max_relative_error(&[ga, gb], &numeric) <= 1e-6);
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
        assert!(relative_error(1e-12, 2e-12) < 1e-5);
    }
}
