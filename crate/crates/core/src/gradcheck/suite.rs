//! Finite-difference check of every layer and of the three full networks at
//! tiny sizes.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};

use super::{check_op, check_op_input, finite_diff_grad, max_relative_error, DEFAULT_EPS};
use crate::data::Batch;
use crate::error::{Error, Result};
use crate::layers::{ConvBank, ConvSpec, Dropout, Embedding, GradientReversal, LinearHead, SoftmaxCrossEntropy};
use crate::model::{ArchKind, Group, HyperParams, Network};
use crate::op::{DiffOp, Mode, OpGrads, OpRng};
use crate::tensor::Tensor;

/// Pass threshold for every component.
pub const SUITE_TOLERANCE: f64 = 1e-4;

/// Minimum distance from a ReLU kink or max-pool tie before finite
/// differences are trusted; inputs closer than this are redrawn.
pub const KINK_MARGIN: f64 = 1e-3;

const MAX_REDRAWS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SuiteSizes {
    /// Sequence length.
    pub seq_len: usize,
    pub embed_dim: usize,
    /// Filters per width.
    pub filters: usize,
    pub labels: usize,
    pub domains: usize,
    pub vocab: usize,
    pub batch: usize,
}

impl Default for SuiteSizes {
    fn default() -> Self {
        SuiteSizes {
            seq_len: 8,
            embed_dim: 2,
            filters: 2,
            labels: 2,
            domains: 3,
            vocab: 7,
            batch: 3,
        }
    }
}

impl FromStr for SuiteSizes {
    type Err = Error;

    /// Comma-separated `key=value` overrides, e.g. `L=10,e=3,K=2`. Keys: `L`
    /// (sequence length), `e` (embedding), `f` (filters per width), `C`
    /// (labels), `K` (domains), `V` (vocabulary), `B` (batch).
    fn from_str(s: &str) -> Result<Self> {
        let mut sizes = SuiteSizes::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("size `{part}` is not key=value")))?;
            let v: usize = v
                .parse()
                .map_err(|_| Error::Config(format!("size `{part}` needs a non-negative integer")))?;
            let slot = match k {
                "L" => &mut sizes.seq_len,
                "e" => &mut sizes.embed_dim,
                "f" => &mut sizes.filters,
                "C" => &mut sizes.labels,
                "K" => &mut sizes.domains,
                "V" => &mut sizes.vocab,
                "B" => &mut sizes.batch,
                _ => return Err(Error::Config(format!("unknown size key `{k}` (use L, e, f, C, K, V, B)"))),
            };
            *slot = v;
        }
        sizes.validate()?;
        Ok(sizes)
    }
}

impl SuiteSizes {
    pub fn validate(&self) -> Result<()> {
        if self.seq_len < 3 {
            return Err(Error::Config("sequence length must be at least 3 (widest filter)".into()));
        }
        if self.labels < 2 || self.domains < 1 || self.vocab < 2 {
            return Err(Error::Config("need at least 2 labels, 1 domain and 2 vocabulary entries".into()));
        }
        if self.embed_dim == 0 || self.filters == 0 || self.batch == 0 {
            return Err(Error::Config("embedding, filter and batch sizes must be positive".into()));
        }
        Ok(())
    }

    fn conv_specs(&self) -> Vec<ConvSpec> {
        vec![ConvSpec::new(2, self.filters), ConvSpec::new(3, self.filters)]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentResult {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

impl ComponentResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= SUITE_TOLERANCE
    }
}

impl fmt::Display for ComponentResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:<24} {:>6} {:>12.3e}  {}",
            self.name,
            self.checked,
            self.max_rel_error,
            if self.passed() { "ok" } else { "FAIL" }
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SuiteConfig {
    pub sizes: SuiteSizes,
    pub seed: u64,
    /// Deliberately breaks the linear layer's backward pass (test fixture).
    pub corrupt_linear: bool,
}


/// Wraps an op and scales its parameter gradients, so the suite can prove
/// it catches a broken backward pass.
struct Corrupted<O>(O);

impl<O: DiffOp> DiffOp for Corrupted<O> {
    type Input = O::Input;
    type Cache = O::Cache;

    fn forward(&self, input: &O::Input, mode: Mode, rng: &mut OpRng) -> Result<(Tensor, O::Cache)> {
        self.0.forward(input, mode, rng)
    }

    fn backward(&self, cache: &O::Cache, grad_out: &Tensor) -> Result<OpGrads> {
        let mut g = self.0.backward(cache, grad_out)?;
        for p in &mut g.params {
            p.scale(1.5);
        }
        Ok(g)
    }

    fn params(&self) -> Vec<&Tensor> {
        self.0.params()
    }

    fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.0.params_mut()
    }
}

fn random_tensor(shape: &[usize], rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).expect("non-empty shape")
}

fn count(ts: &[&Tensor]) -> usize {
    ts.iter().map(|t| t.len()).sum()
}

/// Runs every component check. Deterministic in `cfg.seed`.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<ComponentResult>> {
    let s = cfg.sizes;
    s.validate()?;
    let mut rng = OpRng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    let mut push = |name: &str, err: f64, checked: usize| {
        out.push(ComponentResult {
            name: name.to_string(),
            max_rel_error: err,
            checked,
        })
    };

    // Embedding.
    let mut emb = Embedding::new(s.vocab, s.embed_dim, &mut rng);
    let ids: Vec<u32> = (0..s.seq_len).map(|_| rng.gen_range(0..s.vocab as u32)).collect();
    let err = check_op(&mut emb, &ids[..], Mode::Eval, rng.gen())?;
    push("embedding", err, emb.table.len());

    // Convolution bank; redraw inputs that sit on a kink.
    let mut bank = ConvBank::new(&s.conv_specs(), s.embed_dim, &mut rng);
    let mut x = random_tensor(&[s.seq_len, s.embed_dim], &mut rng);
    for _ in 0..MAX_REDRAWS {
        if bank.forward_pool(&x)?.1.kink_margin() >= KINK_MARGIN {
            break;
        }
        x = random_tensor(&[s.seq_len, s.embed_dim], &mut rng);
    }
    let seed = rng.gen();
    let err = check_op(&mut bank, &x, Mode::Eval, seed)?.max(check_op_input(&bank, &x, Mode::Eval, seed)?);
    push("conv bank", err, count(&bank.params()) + x.len());

    // Dropout, in both modes (train with a fixed mask).
    let drop = Dropout::new(0.5)?;
    let h = random_tensor(&[2 * s.filters * 2], &mut rng);
    push("dropout (eval)", check_op_input(&drop, &h, Mode::Eval, rng.gen())?, h.len());
    push("dropout (train)", check_op_input(&drop, &h, Mode::Train, rng.gen())?, h.len());

    // Linear head.
    let x = random_tensor(&[4 * s.filters], &mut rng);
    let head = LinearHead::new(x.len(), s.labels, &mut rng);
    let seed = rng.gen();
    let err = if cfg.corrupt_linear {
        check_op(&mut Corrupted(head.clone()), &x, Mode::Eval, seed)?
    } else {
        check_op(&mut head.clone(), &x, Mode::Eval, seed)?
    };
    let err = err.max(check_op_input(&head, &x, Mode::Eval, seed)?);
    push("linear", err, count(&head.params()) + x.len());

    // Softmax + cross-entropy.
    let logits = random_tensor(&[s.labels], &mut rng);
    let loss = SoftmaxCrossEntropy {
        gold: rng.gen_range(0..s.labels),
    };
    push("softmax+cross-entropy", check_op_input(&loss, &logits, Mode::Eval, rng.gen())?, logits.len());

    // x -> A -> GRL(λ) -> B -> CE: gradients above the reversal are plain,
    // below it they are -λ times the unreversed ones.
    let (err, n) = grl_composite(s, &mut rng)?;
    push("gradient reversal", err, n);

    for (kind, domains) in [
        (ArchKind::Baseline, s.domains.clamp(1, 2)),
        (ArchKind::Cond, s.domains),
        (ArchKind::Gen, s.domains),
    ] {
        let (err, n) = check_network(kind, s, domains, &mut rng)?;
        push(&format!("model {}", kind.name()), err, n);
    }
    Ok(out)
}

fn grl_composite(s: SuiteSizes, rng: &mut OpRng) -> Result<(f64, usize)> {
    let lambda = 0.7;
    let hidden = 3;
    let x = random_tensor(&[2 * s.embed_dim + 1], rng);
    let a = LinearHead::new(x.len(), hidden, rng);
    let b = LinearHead::new(hidden, s.labels, rng);
    let gold = rng.gen_range(0..s.labels);
    let grl = GradientReversal::new(lambda);

    let loss = |x: &Tensor, a: &LinearHead, b: &LinearHead| -> Result<f64> {
        let h = grl.forward(&Tensor::vector(&a.apply(x.data())?));
        Ok(SoftmaxCrossEntropy::loss_and_grad(&b.apply(h.data())?, gold)?.0)
    };

    let h = a.apply(x.data())?;
    let (_, g_logits, _) = SoftmaxCrossEntropy::loss_and_grad(&b.apply(&h)?, gold)?;
    let mut gb = LinearHead::zeros(hidden, s.labels);
    let g_h = b.backward_into(&h, &g_logits, &mut gb);
    let g_h = grl.backward_vec(&g_h);
    let mut ga = LinearHead::zeros(x.len(), hidden);
    let g_x = a.backward_into(x.data(), &g_h, &mut ga);

    let points = vec![x.clone(), a.weights.clone(), a.bias.clone(), b.weights.clone(), b.bias.clone()];
    let numeric = finite_diff_grad(
        |p| {
            let a = LinearHead {
                weights: p[1].clone(),
                bias: p[2].clone(),
            };
            let b = LinearHead {
                weights: p[3].clone(),
                bias: p[4].clone(),
            };
            Ok(Tensor::vector(&[loss(&p[0], &a, &b)?]))
        },
        &points,
        DEFAULT_EPS,
    )?;
    let mut expected = numeric.clone();
    for t in &mut expected[..3] {
        t.scale(-lambda);
    }
    let analytic = vec![Tensor::vector(&g_x), ga.weights, ga.bias, gb.weights, gb.bias];
    let n = points.iter().map(Tensor::len).sum();
    Ok((max_relative_error(&analytic, &expected), n))
}

fn tiny_hyper(s: SuiteSizes) -> HyperParams {
    HyperParams {
        lambda_d: 0.3,
        lambda_g: 0.7,
        dropout: 0.5,
        embed_dim: s.embed_dim,
        conv_specs: s.conv_specs(),
        learning_rate: 1e-3,
    }
}

fn random_batch(s: SuiteSizes, domains: usize, rng: &mut OpRng) -> Batch {
    Batch {
        seq_len: s.seq_len,
        ids: (0..s.batch * s.seq_len).map(|_| rng.gen_range(0..s.vocab as u32)).collect(),
        labels: (0..s.batch).map(|_| rng.gen_range(0..s.labels)).collect(),
        domains: (0..s.batch).map(|i| (i + rng.gen_range(0..domains)) % domains).collect(),
    }
}

/// Full-network check. Every group except the discriminator is compared
/// against finite differences of `task + λ_g·gen − λ_d·adv` (the reversed
/// objective the encoder actually descends); the discriminator against
/// finite differences of `adv`. Dropout runs in train mode with a fixed mask.
pub fn check_network(kind: ArchKind, s: SuiteSizes, domains: usize, rng: &mut OpRng) -> Result<(f64, usize)> {
    let hp = tiny_hyper(s);
    let lambdas = (hp.lambda_d, hp.lambda_g);
    let dropout = Dropout::new(hp.dropout)?;
    let mut attempt = 0;
    let (net, batch) = loop {
        let net = Network::new(kind, &hp, s.vocab, s.labels, domains, true, rng)?;
        let batch = random_batch(s, domains, rng);
        if net.min_kink_margin(&batch)? >= KINK_MARGIN || attempt == MAX_REDRAWS {
            break (net, batch);
        }
        attempt += 1;
    };
    let mask_seed: u64 = rng.gen();

    let (_, grads) = net.loss_backward(&batch, lambdas, &dropout, &mut OpRng::seed_from_u64(mask_seed))?;
    let points: Vec<Tensor> = net.params().into_iter().map(|(_, _, t)| t.clone()).collect();
    let groups: Vec<Group> = net.params().into_iter().map(|(_, g, _)| g).collect();
    let objective = |reversed: bool| {
        let net = &net;
        let batch = &batch;
        let dropout = &dropout;
        move |p: &[Tensor]| -> Result<Tensor> {
            let mut probe = net.clone();
            for ((_, _, dst), src) in probe.params_mut().into_iter().zip(p) {
                *dst = src.clone();
            }
            let l = probe.batch_loss(batch, lambdas, Mode::Train, dropout, &mut OpRng::seed_from_u64(mask_seed))?;
            let v = if reversed {
                l.task + lambdas.1 * l.gen - lambdas.0 * l.adv
            } else {
                l.adv
            };
            Ok(Tensor::vector(&[v]))
        }
    };
    let encoder = finite_diff_grad(objective(true), &points, DEFAULT_EPS)?;
    let disc = finite_diff_grad(objective(false), &points, DEFAULT_EPS)?;
    let numeric: Vec<Tensor> = groups
        .iter()
        .zip(encoder.into_iter().zip(disc))
        .map(|(g, (e, d))| if *g == Group::Discriminator { d } else { e })
        .collect();
    let analytic: Vec<Tensor> = grads.params().into_iter().map(|(_, _, t)| t.clone()).collect();
    Ok((max_relative_error(&analytic, &numeric), net.num_params()))
}
