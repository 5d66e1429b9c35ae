//! Baseline, domain-conditional (Cond) and domain-generative (Gen) networks.
//!
//! All three share one layout: an embedding table feeding a shared
//! convolution bank (`h^s`) and zero or more private banks (`h^p`), a label
//! classifier over `[h^s; h^p]`, a domain discriminator over `h^s` placed
//! behind gradient reversal, and (Gen, or baseline with `+g`) a domain
//! generator head over `h^p`. The baseline has a single bank of doubled
//! width, no private banks, and attaches every head to that one
//! representation.

mod forward;

pub use forward::{Forward, LossBreakdown, RepresentationPair};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::{ConvBank, ConvSpec, Embedding, LinearHead};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchKind {
    Baseline,
    Cond,
    Gen,
}

impl ArchKind {
    pub fn name(self) -> &'static str {
        match self {
            ArchKind::Baseline => "baseline",
            ArchKind::Cond => "cond",
            ArchKind::Gen => "gen",
        }
    }
}

impl std::str::FromStr for ArchKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(ArchKind::Baseline),
            "cond" => Ok(ArchKind::Cond),
            "gen" => Ok(ArchKind::Gen),
            other => Err(Error::Config(format!(
                "unknown model kind `{other}` (expected baseline, cond or gen)"
            ))),
        }
    }
}

/// The `+d` (adversarial) and `+g` (generative) loss switches.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Switches {
    #[serde(default)]
    pub adversarial: bool,
    #[serde(default)]
    pub generative: bool,
}

impl Switches {
    pub const NONE: Switches = Switches {
        adversarial: false,
        generative: false,
    };

    pub fn label(&self) -> String {
        let mut s = String::new();
        if self.adversarial {
            s.push_str("+d");
        }
        if self.generative {
            s.push_str("+g");
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HyperParams {
    pub lambda_d: f64,
    pub lambda_g: f64,
    pub dropout: f64,
    pub embed_dim: usize,
    /// Per-pathway filter banks; the baseline doubles each filter count.
    pub conv_specs: Vec<ConvSpec>,
    pub learning_rate: f64,
}

impl Default for HyperParams {
    /// Byte-level defaults: widths 2, 4, 8, 16, 32 with 128 filters each.
    fn default() -> Self {
        HyperParams {
            lambda_d: 1e-3,
            lambda_g: 1e-3,
            dropout: 0.5,
            embed_dim: 300,
            conv_specs: [2, 4, 8, 16, 32].iter().map(|&w| ConvSpec::new(w, 128)).collect(),
            learning_rate: 1e-4,
        }
    }
}

impl HyperParams {
    /// Word-level defaults: widths 3, 4, 5.
    pub fn word_default() -> Self {
        HyperParams {
            conv_specs: [3, 4, 5].iter().map(|&w| ConvSpec::new(w, 128)).collect(),
            ..HyperParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.lambda_d >= 0.0 && self.lambda_d.is_finite()) {
            return bad(format!("lambda_d must be a finite value >= 0, got {}", self.lambda_d));
        }
        if !(self.lambda_g >= 0.0 && self.lambda_g.is_finite()) {
            return bad(format!("lambda_g must be a finite value >= 0, got {}", self.lambda_g));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.embed_dim == 0 {
            return bad("embed_dim must be positive".into());
        }
        if self.conv_specs.is_empty() || self.conv_specs.iter().any(|s| s.width == 0 || s.filters == 0) {
            return bad("conv_specs must be a non-empty list of positive (width, filters)".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        Ok(())
    }

    pub fn max_width(&self) -> usize {
        self.conv_specs.iter().map(|s| s.width).max().unwrap_or(0)
    }

    /// Effective `(λ_d, λ_g)` once the switches are applied.
    pub fn effective_lambdas(&self, switches: Switches) -> (f64, f64) {
        (
            if switches.adversarial { self.lambda_d } else { 0.0 },
            if switches.generative { self.lambda_g } else { 0.0 },
        )
    }
}

/// Parameter groups, used for naming in diagnostics and persistence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Embedding,
    Shared,
    Private,
    Classifier,
    Discriminator,
    Generator,
}

impl Group {
    pub fn name(self) -> &'static str {
        match self {
            Group::Embedding => "embedding",
            Group::Shared => "shared",
            Group::Private => "private",
            Group::Classifier => "classifier",
            Group::Discriminator => "discriminator",
            Group::Generator => "generator",
        }
    }
}

/// Network parameters. The same type doubles as the gradient container, so
/// `params()` of a model and of its gradients line up entry for entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub kind: ArchKind,
    pub embedding: Embedding,
    /// `CNN^s`, or the single CNN of the baseline.
    pub shared: ConvBank,
    /// Cond: one bank per training domain. Gen: exactly one. Baseline: none.
    pub private: Vec<ConvBank>,
    pub classifier: LinearHead,
    pub discriminator: LinearHead,
    pub generator: Option<LinearHead>,
}

impl Network {
    /// Fresh randomly initialised network.
    ///
    /// `with_generator` only matters for the baseline; Gen always carries a
    /// generator head and Cond never does.
    pub fn new(
        kind: ArchKind,
        hp: &HyperParams,
        vocab_size: usize,
        labels: usize,
        domains: usize,
        with_generator: bool,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        hp.validate()?;
        if labels == 0 || domains == 0 || vocab_size == 0 {
            return Err(Error::Config(format!(
                "network needs labels, domains and vocabulary (got {labels}, {domains}, {vocab_size})"
            )));
        }
        let e = hp.embed_dim;
        let embedding = Embedding::new(vocab_size, e, rng);
        let (shared, private) = match kind {
            ArchKind::Baseline => {
                let doubled: Vec<ConvSpec> = hp
                    .conv_specs
                    .iter()
                    .map(|s| ConvSpec::new(s.width, 2 * s.filters))
                    .collect();
                (ConvBank::new(&doubled, e, rng), Vec::new())
            }
            ArchKind::Cond => {
                let shared = ConvBank::new(&hp.conv_specs, e, rng);
                let private = (0..domains).map(|_| ConvBank::new(&hp.conv_specs, e, rng)).collect();
                (shared, private)
            }
            ArchKind::Gen => {
                let shared = ConvBank::new(&hp.conv_specs, e, rng);
                let private = vec![ConvBank::new(&hp.conv_specs, e, rng)];
                (shared, private)
            }
        };
        let hs = shared.output_dim();
        let hp_dim = private.first().map_or(0, |b| b.output_dim());
        let classifier = LinearHead::new(hs + hp_dim, labels, rng);
        let discriminator = LinearHead::new(hs, domains, rng);
        let generator = match kind {
            ArchKind::Gen => Some(LinearHead::new(hp_dim, domains, rng)),
            ArchKind::Baseline if with_generator => Some(LinearHead::new(hs, domains, rng)),
            _ => None,
        };
        Ok(Network {
            kind,
            embedding,
            shared,
            private,
            classifier,
            discriminator,
            generator,
        })
    }

    /// All-zero network with the same layout (gradient accumulator).
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for (_, _, t) in z.params_mut() {
            t.fill(0.0);
        }
        z
    }

    /// Baseline whose single bank is `[shared; private]` of this Gen network,
    /// with the classifier copied over. With both loss weights at zero it
    /// computes exactly the same label distribution as `self`.
    pub fn matched_baseline(&self) -> Result<Network> {
        if self.kind != ArchKind::Gen {
            return Err(Error::Config("matched baseline requires a Gen network".into()));
        }
        let shared = ConvBank::concat(&self.shared, &self.private[0]);
        let domains = self.discriminator.outputs();
        Ok(Network {
            kind: ArchKind::Baseline,
            embedding: self.embedding.clone(),
            discriminator: LinearHead::zeros(shared.output_dim(), domains),
            shared,
            private: Vec::new(),
            classifier: self.classifier.clone(),
            generator: None,
        })
    }

    pub fn num_labels(&self) -> usize {
        self.classifier.outputs()
    }

    pub fn num_domains(&self) -> usize {
        self.discriminator.outputs()
    }

    pub fn shared_dim(&self) -> usize {
        self.shared.output_dim()
    }

    pub fn private_dim(&self) -> usize {
        self.private.first().map_or(0, |b| b.output_dim())
    }

    pub fn max_width(&self) -> usize {
        self.private
            .iter()
            .map(|b| b.max_width())
            .chain([self.shared.max_width()])
            .max()
            .unwrap_or(0)
    }

    pub fn params(&self) -> Vec<(String, Group, &Tensor)> {
        let mut out = vec![("embedding.table".to_string(), Group::Embedding, &self.embedding.table)];
        push_bank(&mut out, "shared", Group::Shared, &self.shared);
        for (k, bank) in self.private.iter().enumerate() {
            push_bank(&mut out, &format!("private.{k}"), Group::Private, bank);
        }
        push_head(&mut out, "classifier", Group::Classifier, &self.classifier);
        push_head(&mut out, "discriminator", Group::Discriminator, &self.discriminator);
        if let Some(g) = &self.generator {
            push_head(&mut out, "generator", Group::Generator, g);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<(String, Group, &mut Tensor)> {
        let mut out = vec![("embedding.table".to_string(), Group::Embedding, &mut self.embedding.table)];
        push_bank_mut(&mut out, "shared", Group::Shared, &mut self.shared);
        for (k, bank) in self.private.iter_mut().enumerate() {
            push_bank_mut(&mut out, &format!("private.{k}"), Group::Private, bank);
        }
        push_head_mut(&mut out, "classifier", Group::Classifier, &mut self.classifier);
        push_head_mut(&mut out, "discriminator", Group::Discriminator, &mut self.discriminator);
        if let Some(g) = &mut self.generator {
            push_head_mut(&mut out, "generator", Group::Generator, g);
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(|(_, _, t)| t.len()).sum()
    }
}

fn push_bank<'a>(out: &mut Vec<(String, Group, &'a Tensor)>, prefix: &str, group: Group, bank: &'a ConvBank) {
    for (i, (w, b)) in bank.weights.iter().zip(&bank.biases).enumerate() {
        out.push((format!("{prefix}.w{i}"), group, w));
        out.push((format!("{prefix}.b{i}"), group, b));
    }
}

fn push_bank_mut<'a>(
    out: &mut Vec<(String, Group, &'a mut Tensor)>,
    prefix: &str,
    group: Group,
    bank: &'a mut ConvBank,
) {
    for (i, (w, b)) in bank.weights.iter_mut().zip(bank.biases.iter_mut()).enumerate() {
        out.push((format!("{prefix}.w{i}"), group, w));
        out.push((format!("{prefix}.b{i}"), group, b));
    }
}

fn push_head<'a>(out: &mut Vec<(String, Group, &'a Tensor)>, prefix: &str, group: Group, head: &'a LinearHead) {
    out.push((format!("{prefix}.weights"), group, &head.weights));
    out.push((format!("{prefix}.bias"), group, &head.bias));
}

fn push_head_mut<'a>(
    out: &mut Vec<(String, Group, &'a mut Tensor)>,
    prefix: &str,
    group: Group,
    head: &'a mut LinearHead,
) {
    out.push((format!("{prefix}.weights"), group, &mut head.weights));
    out.push((format!("{prefix}.bias"), group, &mut head.bias));
}
