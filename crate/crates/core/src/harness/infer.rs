use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::data::tokenize;
use crate::error::{Error, Result};
use crate::layers::Dropout;
use crate::model::{ArchKind, Network};
use crate::op::{Mode, OpRng};
use crate::persist::TrainedModel;

/// Shannon entropy in nats, with `0·ln 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the smallest value; ties go to the lowest index.
pub fn argmin_first(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v < values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// One domain for the whole test set.
    Dataset,
    /// One domain per instance.
    Instance,
}

/// How a Cond model picks the private pathway for test data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InferMode {
    MinEntropy(Granularity),
    /// Best candidate by accuracy against the test labels.
    Oracle,
    /// Always route through the named training domain.
    Fixed(String),
}

impl Default for InferMode {
    fn default() -> Self {
        InferMode::MinEntropy(Granularity::Dataset)
    }
}

impl FromStr for InferMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "min-entropy" => Ok(InferMode::MinEntropy(Granularity::Dataset)),
            "min-entropy:instance" => Ok(InferMode::MinEntropy(Granularity::Instance)),
            "oracle" => Ok(InferMode::Oracle),
            _ => match s.strip_prefix("fixed:") {
                Some(d) if !d.is_empty() => Ok(InferMode::Fixed(d.to_string())),
                _ => Err(Error::Config(format!(
                    "unknown inference mode `{s}` (expected min-entropy, min-entropy:instance, oracle or fixed:<domain>)"
                ))),
            },
        }
    }
}

impl fmt::Display for InferMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InferMode::MinEntropy(Granularity::Dataset) => f.write_str("min-entropy"),
            InferMode::MinEntropy(Granularity::Instance) => f.write_str("min-entropy:instance"),
            InferMode::Oracle => f.write_str("oracle"),
            InferMode::Fixed(d) => write!(f, "fixed:{d}"),
        }
    }
}

/// Label distributions of a Cond network for every instance under every
/// candidate domain: `result[i][k]`.
pub fn candidate_distributions(network: &Network, instances: &[Vec<u32>]) -> Result<Vec<Vec<Vec<f64>>>> {
    instances.iter().map(|ids| network.class_probs_per_domain(ids)).collect()
}

/// Mean entropy per candidate domain over a set of instances.
pub fn mean_entropies(dists: &[Vec<Vec<f64>>], candidates: usize) -> Vec<f64> {
    let mut sums = vec![0.0; candidates];
    for inst in dists {
        for (k, p) in inst.iter().enumerate() {
            sums[k] += entropy(p);
        }
    }
    let n = dists.len().max(1) as f64;
    sums.into_iter().map(|s| s / n).collect()
}

/// Per-candidate accuracy against labels; `None` labels count as wrong.
pub fn candidate_accuracies(dists: &[Vec<Vec<f64>>], labels: &[Option<usize>], candidates: usize) -> Vec<f64> {
    let mut correct = vec![0usize; candidates];
    for (inst, gold) in dists.iter().zip(labels) {
        for (k, p) in inst.iter().enumerate() {
            if Some(argmax_first(p)) == *gold {
                correct[k] += 1;
            }
        }
    }
    let n = dists.len().max(1) as f64;
    correct.into_iter().map(|c| c as f64 / n).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinEntropyResult {
    /// Chosen domain per instance (all equal at dataset granularity).
    pub chosen: Vec<usize>,
    pub predictions: Vec<usize>,
    /// Mean entropy per candidate domain.
    pub mean_entropy: Vec<f64>,
}

/// Minimum-entropy routing over precomputed candidate distributions.
pub fn min_entropy_select(dists: &[Vec<Vec<f64>>], candidates: usize, granularity: Granularity) -> MinEntropyResult {
    let mean_entropy = mean_entropies(dists, candidates);
    let chosen: Vec<usize> = match granularity {
        Granularity::Dataset => vec![argmin_first(&mean_entropy); dists.len()],
        Granularity::Instance => dists
            .iter()
            .map(|inst| argmin_first(&inst.iter().map(|p| entropy(p)).collect::<Vec<_>>()))
            .collect(),
    };
    let predictions = dists.iter().zip(&chosen).map(|(inst, &k)| argmax_first(&inst[k])).collect();
    MinEntropyResult {
        chosen,
        predictions,
        mean_entropy,
    }
}

pub fn min_entropy_predict(
    network: &Network,
    instances: &[Vec<u32>],
    granularity: Granularity,
) -> Result<MinEntropyResult> {
    let dists = candidate_distributions(network, instances)?;
    Ok(min_entropy_select(&dists, network.private.len(), granularity))
}

/// Candidate domain with the highest accuracy on labelled data, and that
/// accuracy. Ties go to the lowest index.
pub fn oracle_domain_predict(network: &Network, instances: &[Vec<u32>], labels: &[Option<usize>]) -> Result<(usize, f64)> {
    let dists = candidate_distributions(network, instances)?;
    let acc = candidate_accuracies(&dists, labels, network.private.len());
    let best = argmax_first(&acc);
    Ok((best, acc[best]))
}

/// Prediction for one raw text.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: String,
    pub probs: Vec<f64>,
    /// Cond only: the minimum-entropy training domain and its entropy.
    pub routed: Option<(String, f64)>,
}

impl TrainedModel {
    /// Token ids for `text`. Text with no tokens is fed as pure padding.
    pub fn encode_text(&self, text: &str) -> Vec<u32> {
        match tokenize(text, &self.tokenizer, &self.vocab) {
            Ok(ids) => ids,
            Err(_) => vec![self.vocab.pad(); self.tokenizer.max_len],
        }
    }

    pub fn predict_text(&self, text: &str) -> Result<Prediction> {
        let ids = self.encode_text(text);
        let (probs, routed) = if self.kind == ArchKind::Cond {
            let cands = self.network.class_probs_per_domain(&ids)?;
            let ents: Vec<f64> = cands.iter().map(|p| entropy(p)).collect();
            let k = argmin_first(&ents);
            (cands[k].clone(), Some((self.domains[k].clone(), ents[k])))
        } else {
            let dropout = Dropout::new(0.0)?;
            let f = self
                .network
                .forward(&ids, None, Mode::Eval, &dropout, &mut OpRng::seed_from_u64(0))?;
            (f.class_probs, None)
        };
        Ok(Prediction {
            label: self.labels[argmax_first(&probs)].clone(),
            probs,
            routed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
        assert!((entropy(&[1.0 / 3.0; 3]) - 3f64.ln()).abs() < 1e-12);
        assert!((entropy(&[1.0 / 3.0; 3]) - 1.098612).abs() < 1e-6);
        assert!((entropy(&[0.5, 0.25, 0.25]) - 1.5 * 2f64.ln()).abs() < 1e-12);
        assert!((entropy(&[0.5, 0.25, 0.25]) - 1.039721).abs() < 1e-6);
    }

    #[test]
    fn two_candidates_pick_the_confident_one() {
        let dists = vec![vec![vec![0.9, 0.1], vec![0.5, 0.5]]];
        let ents = mean_entropies(&dists, 2);
        assert!((ents[0] - 0.3251).abs() < 1e-4);
        assert!((ents[1] - std::f64::consts::LN_2).abs() < 1e-4);
        let r = min_entropy_select(&dists, 2, Granularity::Dataset);
        assert_eq!(r.chosen, vec![0]);
        assert_eq!(r.predictions, vec![0]);
    }

    #[test]
    fn ties_go_to_the_lowest_domain() {
        let dists = vec![vec![vec![0.7, 0.3]; 3]; 4];
        for g in [Granularity::Dataset, Granularity::Instance] {
            assert!(min_entropy_select(&dists, 3, g).chosen.iter().all(|&k| k == 0));
        }
        assert_eq!(argmax_first(&[0.2, 0.2]), 0);
    }

    #[test]
    fn single_candidate_is_chosen() {
        let dists = vec![vec![vec![0.4, 0.6]], vec![vec![0.8, 0.2]]];
        let r = min_entropy_select(&dists, 1, Granularity::Dataset);
        assert_eq!(r.chosen, vec![0, 0]);
        let acc = candidate_accuracies(&dists, &[Some(1), Some(1)], 1);
        assert_eq!(argmax_first(&acc), r.chosen[0]);
    }

    #[test]
    fn dataset_level_choice_differs_from_instance_level() {
        // Candidate 0 is confident on the first instance, 1 on the second.
        let dists = vec![
            vec![vec![0.99, 0.01], vec![0.6, 0.4]],
            vec![vec![0.55, 0.45], vec![0.1, 0.9]],
        ];
        let inst = min_entropy_select(&dists, 2, Granularity::Instance);
        assert_eq!(inst.chosen, vec![0, 1]);
        assert_eq!(inst.predictions, vec![0, 1]);
        let ds = min_entropy_select(&dists, 2, Granularity::Dataset);
        assert_eq!(ds.chosen, vec![0, 0]);
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("oracle".parse::<InferMode>().unwrap(), InferMode::Oracle);
        assert_eq!("fixed:books".parse::<InferMode>().unwrap(), InferMode::Fixed("books".into()));
        assert_eq!(
            "min-entropy".parse::<InferMode>().unwrap(),
            InferMode::MinEntropy(Granularity::Dataset)
        );
        assert!("fixed:".parse::<InferMode>().is_err());
        assert!("best".parse::<InferMode>().is_err());
        for m in ["oracle", "fixed:x", "min-entropy", "min-entropy:instance"] {
            assert_eq!(m.parse::<InferMode>().unwrap().to_string(), m);
        }
    }
}
