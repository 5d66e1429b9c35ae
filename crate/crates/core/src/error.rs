use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("{what} index {index} out of range (len {len})")]
    Index {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("token id {id} outside vocabulary of size {size}")]
    Vocabulary { id: usize, size: usize },

    #[error("sequence of length {len} is shorter than convolution width {width}")]
    SequenceTooShort { len: usize, width: usize },

    #[error("domain index {domain} has no private pathway ({count} training domains)")]
    Routing { domain: usize, count: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("gradient-check contract violated: {0}")]
    Contract(String),

    #[error("non-finite gradient in parameter group `{group}`")]
    NonFinite { group: String },

    #[error("training aborted at {step}: {message}")]
    Training { step: StepId, message: String },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("model file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Position of a training step, used in abort diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepId {
    pub epoch: usize,
    pub batch: usize,
}

impl fmt::Display for StepId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "epoch {} batch {}", self.epoch, self.batch)
    }
}
