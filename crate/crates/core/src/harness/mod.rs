//! Training, inference, evaluation and cross-validation.

mod cv;
mod eval;
mod infer;
mod probe;
mod train;

pub use cv::cross_validate;
pub use eval::{evaluate, macro_average, render_table, DomainMetrics, MetricsReport, Routing};
pub use infer::{
    argmax_first, argmin_first, candidate_accuracies, candidate_distributions, entropy, mean_entropies,
    min_entropy_predict, min_entropy_select, oracle_domain_predict, Granularity, InferMode, MinEntropyResult,
    Prediction,
};
pub use probe::{probe_domain_accuracy, ProbeConfig};
pub use train::{train, train_network, EpochRecord, TrainConfig, TrainHistory, TrainOutcome};
