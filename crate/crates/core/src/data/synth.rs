use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{Corpus, Example};
use crate::error::{Error, Result};

/// How spurious tokens are drawn in held-out domains, where they carry no
/// label information.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeldoutSpurious {
    /// Each document picks a decoy label uniformly (independent of its true
    /// label); every spurious slot draws a training domain uniformly and
    /// emits that domain's token for the decoy label.
    Decoy,
    /// Every spurious slot draws both the training domain and the label
    /// uniformly.
    #[default]
    Shuffled,
}

/// Generator for a multi-domain corpus whose training domains contain
/// domain-specific tokens correlated with the label.
///
/// Each token position independently emits: a marker of the document's
/// label with probability `nu`; a marker of its domain with probability
/// `mu`; a spurious token `s(k, c)` with probability `rho`; otherwise a noise
/// word. In training domain `k`, `s(k, c)` is tied to the true label `c`. In
/// held-out domains it is drawn per [`HeldoutSpurious`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub labels: usize,
    pub train_domains: usize,
    pub heldout_domains: usize,
    pub docs_per_domain_label: usize,
    pub doc_len: usize,
    #[serde(default = "default_markers")]
    pub label_markers: usize,
    #[serde(default = "default_markers")]
    pub domain_markers: usize,
    #[serde(default = "default_spurious")]
    pub spurious_markers: usize,
    #[serde(default = "default_noise")]
    pub noise_vocab: usize,
    pub nu: f64,
    pub mu: f64,
    pub rho: f64,
    #[serde(default)]
    pub heldout_spurious: HeldoutSpurious,
    #[serde(default)]
    pub seed: u64,
}

fn default_markers() -> usize {
    4
}
fn default_spurious() -> usize {
    2
}
fn default_noise() -> usize {
    200
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("labels", self.labels),
            ("train_domains", self.train_domains),
            ("docs_per_domain_label", self.docs_per_domain_label),
            ("doc_len", self.doc_len),
            ("label_markers", self.label_markers),
            ("domain_markers", self.domain_markers),
            ("spurious_markers", self.spurious_markers),
            ("noise_vocab", self.noise_vocab),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("synth: `{name}` must be positive")));
            }
        }
        for (name, r) in [("nu", self.nu), ("mu", self.mu), ("rho", self.rho)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Config(format!("synth: rate `{name}` = {r} outside [0, 1]")));
            }
        }
        let sum = self.nu + self.mu + self.rho;
        if sum > 1.0 {
            return Err(Error::Config(format!(
                "synth: rates nu + mu + rho = {sum} sum above 1"
            )));
        }
        Ok(())
    }

    pub fn label_name(c: usize) -> String {
        format!("c{c:02}")
    }

    pub fn train_domain_name(k: usize) -> String {
        format!("d{k:02}")
    }

    pub fn heldout_domain_name(h: usize) -> String {
        format!("h{h:02}")
    }

    pub fn label_marker(c: usize, i: usize) -> String {
        format!("lab{c}_{i}")
    }

    pub fn spurious_token(k: usize, c: usize, i: usize) -> String {
        format!("sp{k}_{c}_{i}")
    }
}

enum DomainRef {
    Train(usize),
    Heldout(usize),
}

fn document(cfg: &SynthConfig, label: usize, domain: &DomainRef, rng: &mut ChaCha8Rng) -> String {
    let decoy = rng.gen_range(0..cfg.labels);
    let mut words = Vec::with_capacity(cfg.doc_len);
    for _ in 0..cfg.doc_len {
        let u: f64 = rng.gen();
        let w = if u < cfg.nu {
            SynthConfig::label_marker(label, rng.gen_range(0..cfg.label_markers))
        } else if u < cfg.nu + cfg.mu {
            let i = rng.gen_range(0..cfg.domain_markers);
            match domain {
                DomainRef::Train(k) => format!("dom{k}_{i}"),
                DomainRef::Heldout(h) => format!("hdom{h}_{i}"),
            }
        } else if u < cfg.nu + cfg.mu + cfg.rho {
            let i = rng.gen_range(0..cfg.spurious_markers);
            let (k, c) = match domain {
                DomainRef::Train(k) => (*k, label),
                DomainRef::Heldout(_) => {
                    let k = rng.gen_range(0..cfg.train_domains);
                    match cfg.heldout_spurious {
                        HeldoutSpurious::Decoy => (k, decoy),
                        HeldoutSpurious::Shuffled => (k, rng.gen_range(0..cfg.labels)),
                    }
                }
            };
            SynthConfig::spurious_token(k, c, i)
        } else {
            format!("w{}", rng.gen_range(0..cfg.noise_vocab))
        };
        words.push(w);
    }
    words.join(" ")
}

/// Generates `(train, heldout)` corpora; deterministic in `seed`.
pub fn synth_corpus(cfg: &SynthConfig, seed: u64) -> Result<(Corpus, Corpus)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut build = |domain: DomainRef, name: String, out: &mut Vec<Example>| {
        for c in 0..cfg.labels {
            for _ in 0..cfg.docs_per_domain_label {
                out.push(Example {
                    text: document(cfg, c, &domain, &mut rng),
                    label: SynthConfig::label_name(c),
                    domain: name.clone(),
                });
            }
        }
    };
    let mut train = Vec::new();
    for k in 0..cfg.train_domains {
        build(DomainRef::Train(k), SynthConfig::train_domain_name(k), &mut train);
    }
    let mut heldout = Vec::new();
    for h in 0..cfg.heldout_domains {
        build(DomainRef::Heldout(h), SynthConfig::heldout_domain_name(h), &mut heldout);
    }
    Ok((Corpus::new(train), Corpus::new(heldout)))
}
