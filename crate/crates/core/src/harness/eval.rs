use std::fmt::Write as _;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::data::{tokenize, Corpus};
use crate::error::{Error, Result};
use crate::layers::Dropout;
use crate::model::ArchKind;
use crate::op::{Mode, OpRng};
use crate::persist::TrainedModel;

use super::infer::{
    argmax_first, candidate_accuracies, candidate_distributions, mean_entropies, min_entropy_select, InferMode,
};
use super::train::EpochRecord;

/// How a Cond model routed one test domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Routing {
    /// `known`, or the inference mode used for an unseen domain.
    pub mode: String,
    /// Chosen training domain, or `per-instance`.
    pub chosen: String,
    /// Mean label-distribution entropy under each candidate domain.
    pub mean_entropy: Vec<f64>,
    /// Accuracy under each candidate domain.
    pub candidate_accuracy: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainMetrics {
    pub domain: String,
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
    /// Examples whose label the model never saw (counted as incorrect).
    pub unseen_labels: usize,
    /// Examples that produced no tokens and were not scored.
    pub skipped: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub routing: Option<Routing>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub domains: Vec<DomainMetrics>,
    /// Unweighted mean of the per-domain accuracies.
    pub macro_accuracy: f64,
    /// Accuracy of the model's own domain discriminator on `h^s`, over
    /// examples from training domains.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub discriminator_accuracy: Option<f64>,
    #[serde(default)]
    pub history: Vec<EpochRecord>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn from_domains(model: String, domains: Vec<DomainMetrics>) -> Self {
        let macro_accuracy = macro_average(&domains.iter().map(|d| d.accuracy).collect::<Vec<_>>()).unwrap_or(0.0);
        MetricsReport {
            model,
            domains,
            macro_accuracy,
            discriminator_accuracy: None,
            history: Vec::new(),
            warnings: Vec::new(),
        }
    }

    pub fn domain(&self, name: &str) -> Option<&DomainMetrics> {
        self.domains.iter().find(|d| d.domain == name)
    }

    /// Pretty-printed JSON, byte-stable for identical reports.
    pub fn to_text(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).map_err(|e| Error::Format(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_text(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Arithmetic mean; `None` for an empty list.
pub fn macro_average(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

struct Scored {
    ids: Vec<u32>,
    gold: Option<usize>,
}

/// Per-domain accuracy of `model` on `corpus`, dropout off.
///
/// Cond routes examples of a training domain through that domain's pathway
/// (unless `mode` is `Fixed`); other domains are routed by `mode`.
pub fn evaluate(model: &TrainedModel, corpus: &Corpus, mode: &InferMode) -> Result<MetricsReport> {
    let fixed = match mode {
        InferMode::Fixed(name) => Some(model.domains.iter().position(|d| d == name).ok_or_else(|| {
            Error::Config(format!("unknown domain `{name}`; known domains: {}", model.domains.join(", ")))
        })?),
        _ => None,
    };
    let net = &model.network;
    let dropout = Dropout::new(0.0)?;
    let mut rng = OpRng::seed_from_u64(0);
    let mut warnings = Vec::new();
    let mut rows = Vec::new();
    let (mut disc_correct, mut disc_total) = (0usize, 0usize);

    for name in &corpus.domains {
        let known = model.domains.iter().position(|d| d == name);
        let mut scored = Vec::new();
        let mut skipped = 0;
        for ex in corpus.examples.iter().filter(|e| &e.domain == name) {
            match tokenize(&ex.text, &model.tokenizer, &model.vocab) {
                Ok(ids) => scored.push(Scored {
                    ids,
                    gold: model.labels.iter().position(|l| *l == ex.label),
                }),
                Err(_) => skipped += 1,
            }
        }
        let unseen_labels = scored.iter().filter(|s| s.gold.is_none()).count();
        if unseen_labels > 0 {
            warnings.push(format!(
                "domain `{name}`: {unseen_labels} examples carry labels unseen in training"
            ));
        }
        if skipped > 0 {
            warnings.push(format!("domain `{name}`: {skipped} examples produced no tokens"));
        }
        let gold: Vec<Option<usize>> = scored.iter().map(|s| s.gold).collect();

        let (predictions, routing) = if net.kind == ArchKind::Cond {
            let instances: Vec<Vec<u32>> = scored.iter().map(|s| s.ids.clone()).collect();
            let dists = candidate_distributions(net, &instances)?;
            let k = net.private.len();
            let mean_entropy = mean_entropies(&dists, k);
            let candidate_accuracy = candidate_accuracies(&dists, &gold, k);
            let route = |mode: String, chosen: String| Routing {
                mode,
                chosen,
                mean_entropy: mean_entropy.clone(),
                candidate_accuracy: candidate_accuracy.clone(),
            };
            let single = |c: usize| -> Vec<usize> { dists.iter().map(|d| argmax_first(&d[c])).collect() };
            let (p, r) = match (fixed, known, mode) {
                (Some(c), _, _) => (single(c), route(mode.to_string(), model.domains[c].clone())),
                (None, Some(c), _) => (single(c), route("known".into(), model.domains[c].clone())),
                (None, None, InferMode::Oracle) => {
                    let c = argmax_first(&candidate_accuracy);
                    (single(c), route(mode.to_string(), model.domains[c].clone()))
                }
                (None, None, InferMode::MinEntropy(g)) => {
                    let r = min_entropy_select(&dists, k, *g);
                    let first = r.chosen.first().copied().unwrap_or(0);
                    let chosen = if r.chosen.iter().all(|&c| c == first) {
                        model.domains[first].clone()
                    } else {
                        "per-instance".to_string()
                    };
                    (r.predictions, route(mode.to_string(), chosen))
                }
                (None, None, InferMode::Fixed(_)) => unreachable!("fixed resolved above"),
            };
            (p, Some(r))
        } else {
            let mut preds = Vec::with_capacity(scored.len());
            for s in &scored {
                let f = net.forward(&s.ids, None, Mode::Eval, &dropout, &mut rng)?;
                preds.push(argmax_first(&f.class_probs));
            }
            (preds, None)
        };

        if let Some(d) = known {
            for s in &scored {
                let h = net.shared_representation(&s.ids)?;
                if argmax_first(&net.discriminator.apply(&h)?) == d {
                    disc_correct += 1;
                }
                disc_total += 1;
            }
        }

        let correct = predictions.iter().zip(&gold).filter(|(p, g)| Some(**p) == **g).count();
        let total = scored.len();
        rows.push(DomainMetrics {
            domain: name.clone(),
            correct,
            total,
            accuracy: if total == 0 { 0.0 } else { correct as f64 / total as f64 },
            unseen_labels,
            skipped,
            routing,
        });
    }

    let model_name = format!("{}{}", model.kind.name(), model.switches.label());
    let mut report = MetricsReport::from_domains(model_name, rows);
    report.discriminator_accuracy = (disc_total > 0).then(|| disc_correct as f64 / disc_total as f64);
    report.warnings = warnings;
    Ok(report)
}

/// Aligned plain-text table: one row per report, one column per domain
/// (union in first-seen order) and a final `ALL` macro column, in percent.
pub fn render_table(reports: &[&MetricsReport]) -> String {
    let mut columns: Vec<&str> = Vec::new();
    for r in reports {
        for d in &r.domains {
            if !columns.contains(&d.domain.as_str()) {
                columns.push(&d.domain);
            }
        }
    }
    let mut header = vec!["model".to_string()];
    header.extend(columns.iter().map(|c| c.to_string()));
    header.push("ALL".into());
    let mut table = vec![header];
    for r in reports {
        let mut row = vec![r.model.clone()];
        for c in &columns {
            row.push(r.domain(c).map_or("-".into(), |d| format!("{:.1}", 100.0 * d.accuracy)));
        }
        row.push(format!("{:.1}", 100.0 * r.macro_accuracy));
        table.push(row);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|j| table.iter().map(|row| row[j].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &table {
        let mut line = String::new();
        for (j, cell) in row.iter().enumerate() {
            if j == 0 {
                let _ = write!(line, "{cell:<w$}", w = widths[j]);
            } else {
                let _ = write!(line, "  {cell:>w$}", w = widths[j]);
            }
        }
        out.push_str(line.trim_end());
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(domain: &str, correct: usize, total: usize) -> DomainMetrics {
        DomainMetrics {
            domain: domain.into(),
            correct,
            total,
            accuracy: correct as f64 / total as f64,
            unseen_labels: 0,
            skipped: 0,
            routing: None,
        }
    }

    #[test]
    fn macro_of_reported_row() {
        let v = [99.9, 91.7, 88.9, 93.1, 98.2, 85.2, 92.2];
        let m = macro_average(&v).unwrap();
        assert!((m - 92.7).abs() <= 0.05, "{m}");
        assert_eq!(macro_average(&[0.8]), Some(0.8));
        assert_eq!(macro_average(&[]), None);
    }

    #[test]
    fn report_macro_is_mean_of_rows() {
        let r = MetricsReport::from_domains("m".into(), vec![row("a", 3, 4), row("b", 1, 3), row("c", 5, 5)]);
        let mean = (0.75 + 1.0 / 3.0 + 1.0) / 3.0;
        assert!((r.macro_accuracy - mean).abs() < 1e-12);
    }

    #[test]
    fn table_layout() {
        let a = MetricsReport::from_domains("baseline".into(), vec![row("x", 1, 2), row("y", 3, 4)]);
        let b = MetricsReport::from_domains("cond+d".into(), vec![row("y", 1, 1)]);
        let t = render_table(&[&a, &b]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("model"));
        assert!(lines[0].ends_with("ALL"));
        assert!(lines[1].contains("50.0") && lines[1].contains("75.0") && lines[1].ends_with("62.5"));
        assert!(lines[2].contains('-') && lines[2].ends_with("100.0"));
    }

    #[test]
    fn report_text_round_trip() {
        let mut r = MetricsReport::from_domains("gen".into(), vec![row("a", 2, 3)]);
        r.discriminator_accuracy = Some(0.5);
        let back = MetricsReport::from_text(&r.to_text().unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
