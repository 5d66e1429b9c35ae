use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::corpus::Corpus;
use super::tokenize::{tokenize, TokenizerSpec, Vocab};
use crate::error::{Error, Result};

/// One tokenised training instance with label and domain indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub ids: Vec<u32>,
    pub label: usize,
    pub domain: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedCorpus {
    pub items: Vec<Encoded>,
    /// Examples dropped because they tokenised to nothing: (index, reason).
    pub skipped: Vec<(usize, String)>,
}

/// Tokenises every example and maps label/domain names onto the given
/// inventories. Names missing from the inventories are a config error.
pub fn encode_corpus(
    corpus: &Corpus,
    spec: &TokenizerSpec,
    vocab: &Vocab,
    labels: &[String],
    domains: &[String],
) -> Result<EncodedCorpus> {
    let find = |list: &[String], name: &str, what: &str| {
        list.iter().position(|x| x == name).ok_or_else(|| {
            Error::Config(format!("{what} `{name}` is not in the inventory {list:?}"))
        })
    };
    let mut items = Vec::with_capacity(corpus.len());
    let mut skipped = Vec::new();
    for (i, ex) in corpus.examples.iter().enumerate() {
        let label = find(labels, &ex.label, "label")?;
        let domain = find(domains, &ex.domain, "domain")?;
        match tokenize(&ex.text, spec, vocab) {
            Ok(ids) => items.push(Encoded { ids, label, domain }),
            Err(e) => {
                log::warn!("skipping example {i}: {e}");
                skipped.push((i, e.to_string()));
            }
        }
    }
    Ok(EncodedCorpus { items, skipped })
}

/// Token ids `B × seq_len` (row-major) with label and domain indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub seq_len: usize,
    pub ids: Vec<u32>,
    pub labels: Vec<usize>,
    pub domains: Vec<usize>,
}

impl Batch {
    pub fn from_items<'a>(items: impl IntoIterator<Item = &'a Encoded>) -> Batch {
        let mut b = Batch {
            seq_len: 0,
            ids: Vec::new(),
            labels: Vec::new(),
            domains: Vec::new(),
        };
        for it in items {
            if b.labels.is_empty() {
                b.seq_len = it.ids.len();
            }
            assert_eq!(it.ids.len(), b.seq_len, "ragged batch");
            b.ids.extend_from_slice(&it.ids);
            b.labels.push(it.label);
            b.domains.push(it.domain);
        }
        b
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[u32] {
        &self.ids[i * self.seq_len..(i + 1) * self.seq_len]
    }
}

/// Splits `items` into batches of `batch_size` (the last may be smaller).
/// With `shuffle`, the order is a seeded permutation; otherwise corpus order.
pub fn batches(items: &[Encoded], batch_size: usize, seed: u64, shuffle: bool) -> impl Iterator<Item = Batch> + '_ {
    assert!(batch_size >= 1, "batch size must be at least 1");
    let mut order: Vec<usize> = (0..items.len()).collect();
    if shuffle {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let chunks: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    chunks
        .into_iter()
        .map(move |chunk| Batch::from_items(chunk.iter().map(|&i| &items[i])))
}
