use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::op::{DiffOp, Mode, OpGrads, OpRng};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub width: usize,
    pub filters: usize,
}

impl ConvSpec {
    pub fn new(width: usize, filters: usize) -> Self {
        ConvSpec { width, filters }
    }
}

/// A bank of 1-D convolutions of different widths over an `L × e` input.
/// Each filter is ReLU-activated and max-pooled over time; per-width results
/// are concatenated in declaration order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvBank {
    pub specs: Vec<ConvSpec>,
    pub embed_dim: usize,
    /// Per width, `(width·e) × filters`.
    pub weights: Vec<Tensor>,
    /// Per width, `filters`.
    pub biases: Vec<Tensor>,
}

#[derive(Debug, Clone)]
pub struct ConvCache {
    input: Tensor,
    /// Per output unit: pooled position, best and runner-up pre-activation.
    argmax: Vec<usize>,
    best: Vec<f64>,
    second: Vec<f64>,
}

impl ConvCache {
    /// Distance of the sample from the nearest non-differentiable point:
    /// the ReLU kink at 0, or a tie between the top two pooled positions.
    pub fn kink_margin(&self) -> f64 {
        self.best
            .iter()
            .zip(&self.second)
            .map(|(&b, &s)| b.abs().min(b - s))
            .fold(f64::INFINITY, f64::min)
    }
}

impl ConvBank {
    pub fn new(specs: &[ConvSpec], embed_dim: usize, rng: &mut impl Rng) -> Self {
        let weights = specs
            .iter()
            .map(|s| {
                let fan_in = s.width * embed_dim;
                super::glorot(&[fan_in, s.filters], fan_in, s.filters, rng)
            })
            .collect();
        let biases = specs.iter().map(|s| Tensor::zeros(&[s.filters])).collect();
        ConvBank {
            specs: specs.to_vec(),
            embed_dim,
            weights,
            biases,
        }
    }

    pub fn zeros(specs: &[ConvSpec], embed_dim: usize) -> Self {
        ConvBank {
            specs: specs.to_vec(),
            embed_dim,
            weights: specs
                .iter()
                .map(|s| Tensor::zeros(&[s.width * embed_dim, s.filters]))
                .collect(),
            biases: specs.iter().map(|s| Tensor::zeros(&[s.filters])).collect(),
        }
    }

    pub fn zeros_like(&self) -> Self {
        ConvBank::zeros(&self.specs, self.embed_dim)
    }

    /// Bank whose output is `[a(x); b(x)]`.
    pub fn concat(a: &ConvBank, b: &ConvBank) -> Self {
        assert_eq!(a.embed_dim, b.embed_dim, "banks must share the embedding size");
        ConvBank {
            specs: a.specs.iter().chain(&b.specs).copied().collect(),
            embed_dim: a.embed_dim,
            weights: a.weights.iter().chain(&b.weights).cloned().collect(),
            biases: a.biases.iter().chain(&b.biases).cloned().collect(),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.specs.iter().map(|s| s.filters).sum()
    }

    pub fn max_width(&self) -> usize {
        self.specs.iter().map(|s| s.width).max().unwrap_or(0)
    }

    pub fn forward_pool(&self, x: &Tensor) -> Result<(Vec<f64>, ConvCache)> {
        let e = self.embed_dim;
        if x.shape().len() != 2 || x.cols() != e {
            return Err(Error::Shape {
                op: "conv_maxpool",
                left: x.shape().to_vec(),
                right: vec![e],
            });
        }
        let len = x.rows();
        let dim = self.output_dim();
        let mut out = Vec::with_capacity(dim);
        let mut argmax = Vec::with_capacity(dim);
        let mut best_all = Vec::with_capacity(dim);
        let mut second_all = Vec::with_capacity(dim);
        let xd = x.data();
        for ((spec, w), b) in self.specs.iter().zip(&self.weights).zip(&self.biases) {
            if len < spec.width {
                return Err(Error::SequenceTooShort {
                    len,
                    width: spec.width,
                });
            }
            let f = spec.filters;
            let wd = w.data();
            let mut best = vec![f64::NEG_INFINITY; f];
            let mut second = vec![f64::NEG_INFINITY; f];
            let mut arg = vec![0usize; f];
            let mut acc = vec![0.0; f];
            for t in 0..=len - spec.width {
                acc.copy_from_slice(b.data());
                let window = &xd[t * e..(t + spec.width) * e];
                for (i, &xi) in window.iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    for (a, wv) in acc.iter_mut().zip(&wd[i * f..(i + 1) * f]) {
                        *a += xi * wv;
                    }
                }
                for j in 0..f {
                    if acc[j] > best[j] {
                        second[j] = best[j];
                        best[j] = acc[j];
                        arg[j] = t;
                    } else if acc[j] > second[j] {
                        second[j] = acc[j];
                    }
                }
            }
            out.extend(best.iter().map(|&v| v.max(0.0)));
            argmax.extend(arg);
            best_all.extend(best);
            second_all.extend(second);
        }
        Ok((
            out,
            ConvCache {
                input: x.clone(),
                argmax,
                best: best_all,
                second: second_all,
            },
        ))
    }

    /// Accumulates parameter gradients into `grads` and `∂/∂x` into `gx`
    /// (`L × e`).
    pub fn backward_into(&self, cache: &ConvCache, grad_out: &[f64], grads: &mut ConvBank, gx: &mut Tensor) {
        let e = self.embed_dim;
        let xd = cache.input.data();
        let mut offset = 0;
        for (s, spec) in self.specs.iter().enumerate() {
            let f = spec.filters;
            let wd = self.weights[s].data();
            let gw = grads.weights[s].data_mut();
            let gb = grads.biases[s].data_mut();
            for j in 0..f {
                let unit = offset + j;
                let g = grad_out[unit];
                // ReLU subgradient at 0 is 0.
                if cache.best[unit] <= 0.0 || g == 0.0 {
                    continue;
                }
                let t = cache.argmax[unit];
                gb[j] += g;
                let window = &xd[t * e..(t + spec.width) * e];
                let gwin = &mut gx.data_mut()[t * e..(t + spec.width) * e];
                for i in 0..spec.width * e {
                    gw[i * f + j] += window[i] * g;
                    gwin[i] += wd[i * f + j] * g;
                }
            }
            offset += f;
        }
    }

    pub fn input_grad_buffer(cache: &ConvCache) -> Tensor {
        cache.input.zeros_like()
    }
}

impl DiffOp for ConvBank {
    type Input = Tensor;
    type Cache = ConvCache;

    fn forward(&self, x: &Tensor, _mode: Mode, _rng: &mut OpRng) -> Result<(Tensor, ConvCache)> {
        let (out, cache) = self.forward_pool(x)?;
        Ok((Tensor::vector(&out), cache))
    }

    fn backward(&self, cache: &ConvCache, grad_out: &Tensor) -> Result<OpGrads> {
        let mut g = self.zeros_like();
        let mut gx = cache.input.zeros_like();
        self.backward_into(cache, grad_out.data(), &mut g, &mut gx);
        let mut params = Vec::with_capacity(2 * self.specs.len());
        for (w, b) in g.weights.into_iter().zip(g.biases) {
            params.push(w);
            params.push(b);
        }
        Ok(OpGrads {
            input: Some(gx),
            params,
        })
    }

    fn params(&self) -> Vec<&Tensor> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| [w, b]).collect()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }
}
