use crate::data::{batches, Encoded};
use crate::error::Result;
use crate::layers::{LinearHead, SoftmaxCrossEntropy};
use crate::model::Network;
use crate::optim::{AdamConfig, AdamState};

use super::infer::argmax_first;
use super::train::{stream, Stream};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-2,
            seed: 0,
        }
    }
}

/// Residual domain information in `h^s`: freezes the encoder, trains a fresh
/// linear domain classifier on `train` and returns its accuracy on `test`.
pub fn probe_domain_accuracy(network: &Network, train: &[Encoded], test: &[Encoded], cfg: &ProbeConfig) -> Result<f64> {
    let features = |items: &[Encoded]| -> Result<Vec<Vec<f64>>> {
        items.iter().map(|e| network.shared_representation(&e.ids)).collect()
    };
    let train_x = features(train)?;
    let test_x = features(test)?;
    let mut rng = stream(cfg.seed, Stream::Probe);
    let mut head = LinearHead::new(network.shared_dim(), network.num_domains(), &mut rng);
    let mut adam = AdamState::new(AdamConfig::with_lr(cfg.learning_rate));

    // Batches are built over positions so features can be looked up by index.
    let positions: Vec<Encoded> = (0..train.len())
        .map(|i| Encoded {
            ids: vec![i as u32],
            label: 0,
            domain: train[i].domain,
        })
        .collect();
    for epoch in 0..cfg.epochs {
        for batch in batches(&positions, cfg.batch_size, cfg.seed.wrapping_add(epoch as u64), true) {
            let mut grads = LinearHead::zeros(head.inputs(), head.outputs());
            let w = 1.0 / batch.len() as f64;
            for (i, &d) in batch.ids.iter().zip(&batch.domains) {
                let x = &train_x[*i as usize];
                let (_, g, _) = SoftmaxCrossEntropy::loss_and_grad(&head.apply(x)?, d)?;
                let g: Vec<f64> = g.iter().map(|v| v * w).collect();
                head.backward_into(x, &g, &mut grads);
            }
            let (hw, hb) = (&mut head.weights, &mut head.bias);
            adam.step(vec![("probe.weights", hw), ("probe.bias", hb)], &[&grads.weights, &grads.bias])?;
        }
    }
    let mut correct = 0;
    for (x, e) in test_x.iter().zip(test) {
        if argmax_first(&head.apply(x)?) == e.domain {
            correct += 1;
        }
    }
    Ok(correct as f64 / test.len().max(1) as f64)
}
