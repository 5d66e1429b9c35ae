use std::thread;

use crate::data::{kfold_split, Corpus};
use crate::error::Result;

use super::eval::{evaluate, DomainMetrics, MetricsReport};
use super::infer::InferMode;
use super::train::{train, TrainConfig};

/// k-fold in-domain evaluation. Each fold trains a fresh model with the
/// same config; per-domain counts are pooled over folds before computing
/// accuracies. Folds run on worker threads, results are combined in fold
/// order.
pub fn cross_validate(corpus: &Corpus, cfg: &TrainConfig, k: usize) -> Result<MetricsReport> {
    cfg.validate()?;
    let split = kfold_split(corpus, k, cfg.seed)?;
    let fold_reports: Vec<Result<MetricsReport>> = thread::scope(|scope| {
        let handles: Vec<_> = split
            .folds
            .iter()
            .map(|fold| {
                scope.spawn(move || {
                    let model = train(&corpus.subset(&fold.train), cfg)?.model;
                    evaluate(&model, &corpus.subset(&fold.test), &InferMode::default())
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("fold worker panicked")).collect()
    });

    let mut pooled: Vec<DomainMetrics> = corpus
        .domains
        .iter()
        .map(|d| DomainMetrics {
            domain: d.clone(),
            correct: 0,
            total: 0,
            accuracy: 0.0,
            unseen_labels: 0,
            skipped: 0,
            routing: None,
        })
        .collect();
    let mut warnings = Vec::new();
    for (f, report) in fold_reports.into_iter().enumerate() {
        let report = report?;
        for d in &report.domains {
            let slot = pooled.iter_mut().find(|p| p.domain == d.domain).expect("fold domain in corpus");
            slot.correct += d.correct;
            slot.total += d.total;
            slot.unseen_labels += d.unseen_labels;
            slot.skipped += d.skipped;
        }
        warnings.extend(report.warnings.into_iter().map(|w| format!("fold {f}: {w}")));
    }
    // Domains never scored (every stratum too small) stay out of the macro.
    pooled.retain(|p| p.total > 0);
    for p in &mut pooled {
        p.accuracy = p.correct as f64 / p.total as f64;
    }
    for (domain, label) in &split.flagged {
        warnings.push(format!(
            "stratum ({domain}, {label}) is smaller than k; kept in every training fold"
        ));
    }
    let mut report = MetricsReport::from_domains(cfg.model_name(), pooled);
    report.warnings = warnings;
    Ok(report)
}
