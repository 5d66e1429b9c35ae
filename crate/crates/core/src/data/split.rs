use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KFold {
    pub folds: Vec<Fold>,
    /// `(domain, label)` strata smaller than `k`; their members stay in the
    /// training side of every fold.
    pub flagged: Vec<(String, String)>,
}

fn strata(corpus: &Corpus) -> BTreeMap<(&str, &str), Vec<usize>> {
    let mut map: BTreeMap<(&str, &str), Vec<usize>> = BTreeMap::new();
    for (i, ex) in corpus.examples.iter().enumerate() {
        map.entry((ex.domain.as_str(), ex.label.as_str())).or_default().push(i);
    }
    map
}

/// Stratified k-fold split over `(domain, label)`.
///
/// Each stratum is shuffled and dealt round-robin across folds, starting
/// where the previous stratum stopped, so every fold holds `⌊n/k⌋` or
/// `⌈n/k⌉` members of each stratum and fold sizes differ by at most one.
pub fn kfold_split(corpus: &Corpus, k: usize, seed: u64) -> Result<KFold> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment = vec![None; corpus.len()];
    let mut flagged = Vec::new();
    let mut next = 0usize;
    for ((domain, label), mut members) in strata(corpus) {
        if members.len() < k {
            log::warn!(
                "stratum ({domain}, {label}) has {} < {k} members; kept in training for every fold",
                members.len()
            );
            flagged.push((domain.to_string(), label.to_string()));
            continue;
        }
        members.shuffle(&mut rng);
        for m in members {
            assignment[m] = Some(next % k);
            next += 1;
        }
    }
    let folds = (0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) =
                (0..corpus.len()).partition(|&i| assignment[i] == Some(f));
            Fold { train, test }
        })
        .collect();
    Ok(KFold { folds, flagged })
}

/// Stratified hold-out: roughly `fraction` of every `(domain, label)`
/// stratum goes to the second list. Returns `(train, held)`, both sorted.
pub fn stratified_holdout(corpus: &Corpus, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::Config(format!("hold-out fraction must lie in [0, 1), got {fraction}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut held = Vec::new();
    for (_, mut members) in strata(corpus) {
        members.shuffle(&mut rng);
        let n = (members.len() as f64 * fraction).round() as usize;
        let n = n.min(members.len().saturating_sub(1));
        held.extend_from_slice(&members[..n]);
    }
    held.sort_unstable();
    let mut is_held = vec![false; corpus.len()];
    for &i in &held {
        is_held[i] = true;
    }
    let train = (0..corpus.len()).filter(|&i| !is_held[i]).collect();
    Ok((train, held))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Example;
    use proptest::prelude::*;

    fn corpus(spec: &[(&str, &str, usize)]) -> Corpus {
        let mut ex = Vec::new();
        for &(d, l, n) in spec {
            for i in 0..n {
                ex.push(Example {
                    text: format!("{d} {l} {i}"),
                    label: l.into(),
                    domain: d.into(),
                });
            }
        }
        Corpus::new(ex)
    }

    #[test]
    fn ten_examples_five_folds_of_two() {
        let c = corpus(&[("d", "a", 10)]);
        let kf = kfold_split(&c, 5, 0).unwrap();
        let mut all: Vec<usize> = Vec::new();
        for f in &kf.folds {
            assert_eq!(f.test.len(), 2);
            assert_eq!(f.train.len(), 8);
            all.extend(&f.test);
        }
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn deterministic_under_seed() {
        let c = corpus(&[("d", "a", 7), ("d", "b", 9), ("e", "a", 6)]);
        assert_eq!(kfold_split(&c, 3, 5).unwrap(), kfold_split(&c, 3, 5).unwrap());
        assert_ne!(kfold_split(&c, 3, 5).unwrap(), kfold_split(&c, 3, 6).unwrap());
    }

    #[test]
    fn small_stratum_is_flagged_and_always_trained() {
        let c = corpus(&[("d", "a", 10), ("e", "b", 1)]);
        let kf = kfold_split(&c, 5, 1).unwrap();
        assert_eq!(kf.flagged, vec![("e".to_string(), "b".to_string())]);
        for f in &kf.folds {
            assert!(f.train.contains(&10));
            assert!(!f.test.contains(&10));
        }
    }

    #[test]
    fn k_below_two_is_rejected() {
        let c = corpus(&[("d", "a", 4)]);
        assert!(matches!(kfold_split(&c, 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn holdout_is_stratified() {
        let c = corpus(&[("d", "a", 10), ("d", "b", 20)]);
        let (train, held) = stratified_holdout(&c, 0.1, 3).unwrap();
        assert_eq!(held.len(), 3);
        assert_eq!(train.len() + held.len(), 30);
        assert_eq!(held.iter().filter(|&&i| i < 10).count(), 1);
    }

    proptest! {
        #[test]
        fn folds_partition_and_stay_proportional(
            sizes in proptest::collection::vec(0usize..17, 1..6),
            k in 2usize..6,
            seed in 0u64..500,
        ) {
            let spec: Vec<(String, String, usize)> = sizes
                .iter()
                .enumerate()
                .map(|(i, &n)| (format!("d{}", i % 2), format!("l{i}"), n))
                .collect();
            let spec_ref: Vec<(&str, &str, usize)> =
                spec.iter().map(|(d, l, n)| (d.as_str(), l.as_str(), *n)).collect();
            let c = corpus(&spec_ref);
            prop_assume!(!c.is_empty());
            let kf = kfold_split(&c, k, seed).unwrap();
            let mut seen = vec![0usize; c.len()];
            for f in &kf.folds {
                for &i in &f.test { seen[i] += 1; }
                prop_assert_eq!(f.test.len() + f.train.len(), c.len());
            }
            for (i, ex) in c.examples.iter().enumerate() {
                let is_flagged = kf.flagged.iter().any(|(d, l)| *d == ex.domain && *l == ex.label);
                prop_assert_eq!(seen[i], if is_flagged { 0 } else { 1 });
            }
            // per-fold stratum counts within one example of n / k
            for (d, l, n) in &spec {
                if *n < k { continue; }
                for f in &kf.folds {
                    let cnt = f.test.iter().filter(|&&i| c.examples[i].domain == *d && c.examples[i].label == *l).count();
                    let ideal = *n as f64 / k as f64;
                    prop_assert!((cnt as f64 - ideal).abs() < 1.0 + 1e-9);
                }
            }
        }
    }
}
