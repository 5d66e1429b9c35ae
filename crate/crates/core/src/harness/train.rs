use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::data::{batches, encode_corpus, stratified_holdout, Corpus, Encoded, TokenizerSpec, Vocab};
use crate::error::{Error, Result, StepId};
use crate::layers::Dropout;
use crate::model::{ArchKind, HyperParams, LossBreakdown, Network, Switches};
use crate::op::{Mode, OpRng};
use crate::optim::{AdamConfig, AdamState};
use crate::persist::TrainedModel;

use super::infer::argmax_first;

/// Independent random streams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stream {
    Init = 1,
    Shuffle = 2,
    Dropout = 3,
    Split = 4,
    Probe = 5,
}

pub(crate) fn stream(seed: u64, which: Stream) -> OpRng {
    let mut rng = OpRng::seed_from_u64(seed);
    rng.set_stream(which as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub kind: ArchKind,
    pub switches: Switches,
    pub hyper: HyperParams,
    pub tokenizer: TokenizerSpec,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Fraction of every (domain, label) stratum held out for monitoring.
    pub dev_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kind: ArchKind::Gen,
            switches: Switches {
                adversarial: true,
                generative: true,
            },
            hyper: HyperParams::default(),
            tokenizer: TokenizerSpec::byte(),
            epochs: 5,
            batch_size: 32,
            seed: 0,
            dev_fraction: 0.1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.hyper.validate()?;
        self.tokenizer.validate(self.hyper.max_width())?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dev_fraction) {
            return Err(Error::Config(format!(
                "dev_fraction must lie in [0, 1), got {}",
                self.dev_fraction
            )));
        }
        if self.kind == ArchKind::Cond && self.switches.generative {
            return Err(Error::Config(
                "the +g switch needs a private generator head; cond has none".into(),
            ));
        }
        Ok(())
    }

    /// Display name such as `cond+d` or `gen+d+g`.
    pub fn model_name(&self) -> String {
        format!("{}{}", self.kind.name(), self.switches.label())
    }

    fn with_generator(&self) -> bool {
        match self.kind {
            ArchKind::Gen => true,
            ArchKind::Cond => false,
            ArchKind::Baseline => self.switches.generative,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the per-batch training losses.
    pub train: LossBreakdown,
    /// Eval-mode losses on the dev slice, if there is one.
    pub dev: Option<LossBreakdown>,
    pub dev_accuracy: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub batches: Vec<LossBreakdown>,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: TrainedModel,
    pub optimizer: AdamState,
    pub history: TrainHistory,
    /// Indices (into the input corpus) of the dev slice.
    pub dev_indices: Vec<usize>,
}

/// Builds vocabulary and network from `corpus` and trains it.
pub fn train(corpus: &Corpus, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if corpus.labels.len() < 2 {
        return Err(Error::Config(format!(
            "training needs at least 2 labels, corpus has {:?}",
            corpus.labels
        )));
    }
    let (train_idx, dev_idx) = if cfg.dev_fraction > 0.0 {
        stratified_holdout(corpus, cfg.dev_fraction, stream(cfg.seed, Stream::Split).gen())?
    } else {
        ((0..corpus.len()).collect(), Vec::new())
    };
    let train_texts = train_idx.iter().map(|&i| corpus.examples[i].text.as_str());
    let vocab = Vocab::build(&cfg.tokenizer, train_texts);
    let labels = corpus.labels.clone();
    let domains = corpus.domains.clone();

    let encode = |idx: &[usize]| -> Result<Vec<Encoded>> {
        let sub = corpus.subset(idx);
        Ok(encode_corpus(&sub, &cfg.tokenizer, &vocab, &labels, &domains)?.items)
    };
    let train_items = encode(&train_idx)?;
    let dev_items = if dev_idx.is_empty() { Vec::new() } else { encode(&dev_idx)? };
    if train_items.is_empty() {
        return Err(Error::EmptyCorpus);
    }

    let network = Network::new(
        cfg.kind,
        &cfg.hyper,
        vocab.size(),
        labels.len(),
        domains.len(),
        cfg.with_generator(),
        &mut stream(cfg.seed, Stream::Init),
    )?;
    let (network, optimizer, history) = train_network(network, &train_items, &dev_items, cfg)?;
    Ok(TrainOutcome {
        model: TrainedModel {
            kind: cfg.kind,
            switches: cfg.switches,
            hyper: cfg.hyper.clone(),
            tokenizer: cfg.tokenizer.clone(),
            vocab,
            labels,
            domains,
            network,
        },
        optimizer,
        history,
        dev_indices: dev_idx,
    })
}

/// The optimisation loop on already-encoded data.
pub fn train_network(
    mut network: Network,
    train_items: &[Encoded],
    dev_items: &[Encoded],
    cfg: &TrainConfig,
) -> Result<(Network, AdamState, TrainHistory)> {
    let dropout = Dropout::new(cfg.hyper.dropout)?;
    let lambdas = cfg.hyper.effective_lambdas(cfg.switches);
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.hyper.learning_rate));
    let mut shuffle_rng = stream(cfg.seed, Stream::Shuffle);
    let mut dropout_rng = stream(cfg.seed, Stream::Dropout);
    let mut history = TrainHistory::default();

    for epoch in 0..cfg.epochs {
        let mut sum = LossBreakdown::default();
        let mut count = 0usize;
        for (b, batch) in batches(train_items, cfg.batch_size, shuffle_rng.gen(), true).enumerate() {
            let step = StepId { epoch, batch: b };
            let (loss, grads) = network.loss_backward(&batch, lambdas, &dropout, &mut dropout_rng)?;
            if !loss.is_finite() {
                return Err(Error::Training {
                    step,
                    message: format!("non-finite loss {loss:?}"),
                });
            }
            adam.step_network(&mut network, &grads).map_err(|e| Error::Training {
                step,
                message: e.to_string(),
            })?;
            sum.task += loss.task;
            sum.adv += loss.adv;
            sum.gen += loss.gen;
            sum.total_reported += loss.total_reported;
            count += 1;
            history.batches.push(loss);
        }
        let n = count.max(1) as f64;
        let train = LossBreakdown {
            task: sum.task / n,
            adv: sum.adv / n,
            gen: sum.gen / n,
            total_reported: sum.total_reported / n,
        };
        let (dev, dev_accuracy) = if dev_items.is_empty() {
            (None, None)
        } else {
            let (l, a) = dev_metrics(&network, dev_items, lambdas, &dropout)?;
            (Some(l), Some(a))
        };
        log::info!(
            "epoch {}: task {:.4} adv {:.4} gen {:.4} total {:.4}{}",
            epoch + 1,
            train.task,
            train.adv,
            train.gen,
            train.total_reported,
            dev_accuracy.map_or(String::new(), |a| format!(" dev acc {a:.4}"))
        );
        history.epochs.push(EpochRecord {
            epoch: epoch + 1,
            train,
            dev,
            dev_accuracy,
        });
    }
    Ok((network, adam, history))
}

/// Eval-mode losses and label accuracy with the true domain routed.
fn dev_metrics(
    network: &Network,
    items: &[Encoded],
    lambdas: (f64, f64),
    dropout: &Dropout,
) -> Result<(LossBreakdown, f64)> {
    // Eval mode draws nothing; the generator is only a placeholder.
    let mut rng = OpRng::seed_from_u64(0);
    let mut sum = LossBreakdown::default();
    let mut correct = 0usize;
    for batch in batches(items, 256, 0, false) {
        let l = network.batch_loss(&batch, lambdas, Mode::Eval, dropout, &mut rng)?;
        let w = batch.len() as f64;
        sum.task += l.task * w;
        sum.adv += l.adv * w;
        sum.gen += l.gen * w;
        sum.total_reported += l.total_reported * w;
        for i in 0..batch.len() {
            let f = network.forward(batch.row(i), Some(batch.domains[i]), Mode::Eval, dropout, &mut rng)?;
            if argmax_first(&f.class_probs) == batch.labels[i] {
                correct += 1;
            }
        }
    }
    let n = items.len() as f64;
    Ok((
        LossBreakdown {
            task: sum.task / n,
            adv: sum.adv / n,
            gen: sum.gen / n,
            total_reported: sum.total_reported / n,
        },
        correct as f64 / n,
    ))
}
