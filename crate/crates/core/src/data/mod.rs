//! Corpora, tokenisation, vocabularies, splits, batching and the synthetic
//! multi-domain corpus generator.

mod batch;
mod corpus;
mod split;
mod synth;
mod tokenize;

pub use batch::{batches, encode_corpus, Batch, Encoded, EncodedCorpus};
pub use corpus::{load_corpus, parse_corpus, save_corpus, write_corpus, Corpus, Example};
pub use split::{kfold_split, stratified_holdout, Fold, KFold};
pub use synth::{synth_corpus, HeldoutSpurious, SynthConfig};
pub use tokenize::{tokenize, TokenizeError, TokenizerMode, TokenizerSpec, Vocab, BYTE_PAD};
