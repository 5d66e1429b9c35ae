use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ArchKind, Network};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::layers::{ConvBank, ConvCache, Dropout, GradientReversal, SoftmaxCrossEntropy};
use crate::op::Mode;
use crate::tensor::softmax_slice;

/// Shared (`h^s`) and private (`h^p`) representations of one instance. For
/// the baseline `h_s` holds the single representation and `h_p` is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationPair {
    pub h_s: Vec<f64>,
    pub h_p: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub class_probs: Vec<f64>,
    /// Discriminator distribution over training domains, from `h^s`.
    pub domain_probs: Vec<f64>,
    /// Generator distribution over training domains, from `h^p`.
    pub gen_probs: Option<Vec<f64>>,
    pub reps: RepresentationPair,
}

/// Batch-mean loss terms. `total_reported = task + λ_g·gen`; the adversarial
/// term is reported on its own.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub task: f64,
    pub adv: f64,
    pub gen: f64,
    pub total_reported: f64,
}

impl LossBreakdown {
    pub fn is_finite(&self) -> bool {
        self.task.is_finite() && self.adv.is_finite() && self.gen.is_finite()
    }
}

struct Pass {
    forward: Forward,
    task: f64,
    adv: f64,
    gen: f64,
}

impl Network {
    fn private_bank(&self, domain: Option<usize>) -> Result<Option<&ConvBank>> {
        match self.kind {
            ArchKind::Baseline => Ok(None),
            ArchKind::Gen => Ok(Some(&self.private[0])),
            ArchKind::Cond => {
                let count = self.private.len();
                match domain {
                    Some(d) if d < count => Ok(Some(&self.private[d])),
                    Some(d) => Err(Error::Routing { domain: d, count }),
                    None => Err(Error::Config(
                        "Cond forward needs a domain index; use min-entropy inference for unseen domains".into(),
                    )),
                }
            }
        }
    }

    /// One instance through the network. When `grads` is given, gradients of
    /// `weight · (task + λ_g·gen)` flow into every group except the
    /// discriminator, the reversed `-λ_d · weight · ∂adv` reaches `h^s`, and
    /// the discriminator receives `weight · ∂adv`.
    #[allow(clippy::too_many_arguments)]
    fn pass(
        &self,
        ids: &[u32],
        label: Option<usize>,
        domain: Option<usize>,
        route: Option<usize>,
        mode: Mode,
        dropout: &Dropout,
        rng: &mut impl Rng,
        lambdas: (f64, f64),
        grads: Option<(&mut Network, f64)>,
    ) -> Result<Pass> {
        let x = self.embedding.lookup(ids)?;
        let (mut h_s, cache_s) = self.shared.forward_pool(&x)?;
        let private = self.private_bank(route)?;
        let (mut h_p, cache_p) = match private {
            Some(bank) => {
                let (h, c) = bank.forward_pool(&x)?;
                (h, Some(c))
            }
            None => (Vec::new(), None),
        };
        let mask_s = dropout.apply_in_place(&mut h_s, mode, rng);
        let mask_p = dropout.apply_in_place(&mut h_p, mode, rng);

        let mut joint = Vec::with_capacity(h_s.len() + h_p.len());
        joint.extend_from_slice(&h_s);
        joint.extend_from_slice(&h_p);
        let class_logits = self.classifier.apply(&joint)?;
        let domain_logits = self.discriminator.apply(&h_s)?;
        // The generator reads h^p, or the single representation for the baseline.
        let gen_input: &[f64] = if self.kind == ArchKind::Baseline { &h_s } else { &h_p };
        let gen_logits = match &self.generator {
            Some(g) => Some(g.apply(gen_input)?),
            None => None,
        };

        let (mut task, mut adv, mut gen) = (0.0, 0.0, 0.0);
        let (mut g_class, mut g_domain, mut g_gen) = (None, None, None);
        if let Some(y) = label {
            let (l, g, _) = SoftmaxCrossEntropy::loss_and_grad(&class_logits, y)?;
            task = l;
            g_class = Some(g);
        }
        if let Some(d) = domain {
            let (l, g, _) = SoftmaxCrossEntropy::loss_and_grad(&domain_logits, d)?;
            adv = l;
            g_domain = Some(g);
            if let Some(logits) = &gen_logits {
                let (l, g, _) = SoftmaxCrossEntropy::loss_and_grad(logits, d)?;
                gen = l;
                g_gen = Some(g);
            }
        }

        if let Some((grads, weight)) = grads {
            let (lambda_d, lambda_g) = lambdas;
            let ds = h_s.len();
            let mut g_hs = vec![0.0; ds];
            let mut g_hp = vec![0.0; h_p.len()];
            if let Some(g) = g_class {
                let g: Vec<f64> = g.iter().map(|v| v * weight).collect();
                let g_joint = self.classifier.backward_into(&joint, &g, &mut grads.classifier);
                g_hs.copy_from_slice(&g_joint[..ds]);
                g_hp.copy_from_slice(&g_joint[ds..]);
            }
            if let Some(g) = g_domain {
                let g: Vec<f64> = g.iter().map(|v| v * weight).collect();
                let g_in = self.discriminator.backward_into(&h_s, &g, &mut grads.discriminator);
                let reversed = GradientReversal::new(lambda_d).backward_vec(&g_in);
                for (a, b) in g_hs.iter_mut().zip(&reversed) {
                    *a += b;
                }
            }
            if let (Some(g), Some(head), Some(ghead)) = (g_gen, &self.generator, grads.generator.as_mut()) {
                let g: Vec<f64> = g.iter().map(|v| v * weight * lambda_g).collect();
                let g_in = head.backward_into(gen_input, &g, ghead);
                let target = if self.kind == ArchKind::Baseline { &mut g_hs } else { &mut g_hp };
                for (a, b) in target.iter_mut().zip(&g_in) {
                    *a += b;
                }
            }
            dropout.backward_in_place(&mut g_hs, &mask_s);
            dropout.backward_in_place(&mut g_hp, &mask_p);
            // Both banks accumulate into one buffer, shared first, so the sum
            // order matches a single bank holding both filter sets.
            let mut g_x = ConvBank::input_grad_buffer(&cache_s);
            self.shared.backward_into(&cache_s, &g_hs, &mut grads.shared, &mut g_x);
            if let (Some(bank), Some(cache)) = (private, &cache_p) {
                let slot = match self.kind {
                    ArchKind::Cond => route.expect("routed above"),
                    _ => 0,
                };
                bank.backward_into(cache, &g_hp, &mut grads.private[slot], &mut g_x);
            }
            self.embedding.backward_into(ids, &g_x, &mut grads.embedding);
        }

        Ok(Pass {
            forward: Forward {
                class_probs: softmax_slice(&class_logits),
                domain_probs: softmax_slice(&domain_logits),
                gen_probs: gen_logits.map(|l| softmax_slice(&l)),
                reps: RepresentationPair { h_s, h_p },
            },
            task,
            adv,
            gen,
        })
    }

    /// Forward pass for any architecture. `domain` selects the private
    /// pathway for Cond and is ignored otherwise.
    pub fn forward(
        &self,
        ids: &[u32],
        domain: Option<usize>,
        mode: Mode,
        dropout: &Dropout,
        rng: &mut impl Rng,
    ) -> Result<Forward> {
        let p = self.pass(ids, None, None, domain, mode, dropout, rng, (0.0, 0.0), None)?;
        Ok(p.forward)
    }

    pub fn cond_forward(
        &self,
        ids: &[u32],
        domain: usize,
        mode: Mode,
        dropout: &Dropout,
        rng: &mut impl Rng,
    ) -> Result<Forward> {
        self.expect_kind(ArchKind::Cond)?;
        self.forward(ids, Some(domain), mode, dropout, rng)
    }

    pub fn gen_forward(&self, ids: &[u32], mode: Mode, dropout: &Dropout, rng: &mut impl Rng) -> Result<Forward> {
        self.expect_kind(ArchKind::Gen)?;
        self.forward(ids, None, mode, dropout, rng)
    }

    fn expect_kind(&self, kind: ArchKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Config(format!(
                "expected a {} network, got {}",
                kind.name(),
                self.kind.name()
            )));
        }
        Ok(())
    }

    /// Eval-mode label distributions of a Cond network under every candidate
    /// training domain (`result[k]` routes through private pathway `k`).
    pub fn class_probs_per_domain(&self, ids: &[u32]) -> Result<Vec<Vec<f64>>> {
        self.expect_kind(ArchKind::Cond)?;
        let x = self.embedding.lookup(ids)?;
        let (h_s, _) = self.shared.forward_pool(&x)?;
        self.private
            .iter()
            .map(|bank| {
                let (h_p, _) = bank.forward_pool(&x)?;
                let mut joint = h_s.clone();
                joint.extend_from_slice(&h_p);
                Ok(softmax_slice(&self.classifier.apply(&joint)?))
            })
            .collect()
    }

    /// Eval-mode shared representation `h^s` (the single `h` for the baseline).
    pub fn shared_representation(&self, ids: &[u32]) -> Result<Vec<f64>> {
        let x = self.embedding.lookup(ids)?;
        Ok(self.shared.forward_pool(&x)?.0)
    }

    /// Batch-mean loss terms and their gradients.
    ///
    /// Every parameter except the discriminator receives the gradient of
    /// `task + λ_g·gen`, plus the reversed `-λ_d·∂adv` through `h^s`. The
    /// discriminator receives the plain `∂adv`. For Cond, instances of domain
    /// `k` are routed through (and only update) private pathway `k`.
    pub fn loss_backward(
        &self,
        batch: &Batch,
        lambdas: (f64, f64),
        dropout: &Dropout,
        rng: &mut impl Rng,
    ) -> Result<(LossBreakdown, Network)> {
        let mut grads = self.zeros_like();
        let losses = self.run_batch(batch, lambdas, Mode::Train, dropout, rng, Some(&mut grads))?;
        Ok((losses, grads))
    }

    /// Batch-mean loss terms without gradients.
    pub fn batch_loss(
        &self,
        batch: &Batch,
        lambdas: (f64, f64),
        mode: Mode,
        dropout: &Dropout,
        rng: &mut impl Rng,
    ) -> Result<LossBreakdown> {
        self.run_batch(batch, lambdas, mode, dropout, rng, None)
    }

    fn run_batch(
        &self,
        batch: &Batch,
        lambdas: (f64, f64),
        mode: Mode,
        dropout: &Dropout,
        rng: &mut impl Rng,
        mut grads: Option<&mut Network>,
    ) -> Result<LossBreakdown> {
        if batch.is_empty() {
            return Err(Error::Config("empty batch".into()));
        }
        let weight = 1.0 / batch.len() as f64;
        let mut sum = LossBreakdown::default();
        for i in 0..batch.len() {
            let d = batch.domains[i];
            if d >= self.num_domains() {
                return Err(Error::Routing {
                    domain: d,
                    count: self.num_domains(),
                });
            }
            let g = grads.as_deref_mut().map(|g| (g, weight));
            let p = self.pass(
                batch.row(i),
                Some(batch.labels[i]),
                Some(d),
                Some(d),
                mode,
                dropout,
                rng,
                lambdas,
                g,
            )?;
            sum.task += p.task;
            sum.adv += p.adv;
            sum.gen += p.gen;
        }
        let mean = LossBreakdown {
            task: sum.task * weight,
            adv: sum.adv * weight,
            gen: sum.gen * weight,
            total_reported: (sum.task + lambdas.1 * sum.gen) * weight,
        };
        Ok(mean)
    }

    /// Smallest distance of any convolution unit in the batch from a ReLU
    /// kink or a max-pool tie. Finite-difference checks need this to exceed
    /// the step size.
    pub fn min_kink_margin(&self, batch: &Batch) -> Result<f64> {
        let mut margin = f64::INFINITY;
        let mut caches: Vec<ConvCache> = Vec::new();
        for i in 0..batch.len() {
            let x = self.embedding.lookup(batch.row(i))?;
            caches.push(self.shared.forward_pool(&x)?.1);
            if let Some(bank) = self.private_bank(Some(batch.domains[i]))? {
                caches.push(bank.forward_pool(&x)?.1);
            }
        }
        for c in &caches {
            margin = margin.min(c.kink_margin());
        }
        Ok(margin)
    }
}
