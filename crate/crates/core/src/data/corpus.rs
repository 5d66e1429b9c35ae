use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One labelled, domain-tagged document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Example {
    pub text: String,
    pub label: String,
    pub domain: String,
}

/// Examples in file order plus the sorted label and domain inventories.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Corpus {
    pub examples: Vec<Example>,
    pub labels: Vec<String>,
    pub domains: Vec<String>,
}

impl Corpus {
    /// Builds inventories (sorted, deduplicated) from the examples.
    pub fn new(examples: Vec<Example>) -> Self {
        let labels: BTreeSet<&str> = examples.iter().map(|e| e.label.as_str()).collect();
        let domains: BTreeSet<&str> = examples.iter().map(|e| e.domain.as_str()).collect();
        let labels = labels.into_iter().map(String::from).collect();
        let domains = domains.into_iter().map(String::from).collect();
        Corpus {
            examples,
            labels,
            domains,
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn label_index(&self, label: &str) -> Option<usize> {
        self.labels.binary_search_by(|l| l.as_str().cmp(label)).ok()
    }

    pub fn domain_index(&self, domain: &str) -> Option<usize> {
        self.domains.binary_search_by(|d| d.as_str().cmp(domain)).ok()
    }

    /// Sub-corpus of the given example indices (inventories recomputed).
    pub fn subset(&self, indices: &[usize]) -> Corpus {
        Corpus::new(indices.iter().map(|&i| self.examples[i].clone()).collect())
    }

    /// Sub-corpus of the examples from one domain.
    pub fn filter_domain(&self, domain: &str) -> Corpus {
        Corpus::new(self.examples.iter().filter(|e| e.domain == domain).cloned().collect())
    }
}

#[derive(Deserialize)]
struct RawRecord {
    text: Option<String>,
    label: Option<String>,
    domain: Option<String>,
}

/// Parses the line-per-record JSON corpus format.
pub fn parse_corpus(content: &str) -> Result<Corpus> {
    let mut examples = Vec::new();
    for (n, line) in content.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let field = |v: Option<String>, name: &str| -> Result<String> {
            match v {
                Some(s) if !s.is_empty() || name == "text" => Ok(s),
                Some(_) => Err(Error::Parse {
                    line: line_no,
                    message: format!("field `{name}` is empty"),
                }),
                None => Err(Error::Parse {
                    line: line_no,
                    message: format!("missing field `{name}`"),
                }),
            }
        };
        examples.push(Example {
            text: field(raw.text, "text")?,
            label: field(raw.label, "label")?,
            domain: field(raw.domain, "domain")?,
        });
    }
    if examples.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(Corpus::new(examples))
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    parse_corpus(&fs::read_to_string(path)?)
}

pub fn write_corpus(corpus: &Corpus, mut out: impl Write) -> Result<()> {
    for ex in &corpus.examples {
        let line = serde_json::to_string(ex).map_err(|e| Error::Format(e.to_string()))?;
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_corpus(corpus, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}
