//! Run configuration files (TOML).

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use domtext::data::{SynthConfig, TokenizerMode, TokenizerSpec};
use domtext::harness::TrainConfig;
use domtext::model::{ArchKind, HyperParams, Switches};
use domtext::{Error, Result};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRunConfig {
    model: ModelSection,
    #[serde(default)]
    tokenizer: toml::Table,
    #[serde(default)]
    hyper: toml::Table,
    #[serde(default)]
    train: TrainSection,
    #[serde(default)]
    paths: Paths,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    kind: ArchKind,
    #[serde(default)]
    adversarial: bool,
    #[serde(default)]
    generative: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct TrainSection {
    epochs: usize,
    batch_size: usize,
    seed: u64,
    dev_fraction: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        TrainSection {
            epochs: d.epochs,
            batch_size: d.batch_size,
            seed: d.seed,
            dev_fraction: d.dev_fraction,
        }
    }
}

/// Optional default locations; command-line flags take precedence.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub data: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub paths: Paths,
}

/// Layers the keys of `table` over the serialised defaults, so every omitted
/// field keeps its mode-dependent default and unknown keys are still caught
/// by the target type.
fn overlay<T: Serialize + DeserializeOwned>(defaults: &T, table: toml::Table, section: &str) -> Result<T> {
    let mut base = toml::Table::try_from(defaults).map_err(|e| Error::Config(e.to_string()))?;
    for (k, v) in table {
        base.insert(k, v);
    }
    T::deserialize(base).map_err(|e| Error::Config(format!("[{section}] {e}")))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let raw: RawRunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mode = match raw.tokenizer.get("mode").and_then(|v| v.as_str()) {
            Some("word") => TokenizerMode::Word,
            Some("byte") | None => TokenizerMode::Byte,
            Some(other) => {
                return Err(Error::Config(format!(
                    "[tokenizer] unknown mode `{other}` (expected byte or word)"
                )))
            }
        };
        let (tok_default, hyper_default) = match mode {
            TokenizerMode::Byte => (TokenizerSpec::byte(), HyperParams::default()),
            TokenizerMode::Word => (TokenizerSpec::word(), HyperParams::word_default()),
        };
        let tokenizer = overlay(&tok_default, raw.tokenizer, "tokenizer")?;
        let hyper = overlay(&hyper_default, raw.hyper, "hyper")?;
        let train = TrainConfig {
            kind: raw.model.kind,
            switches: Switches {
                adversarial: raw.model.adversarial,
                generative: raw.model.generative,
            },
            hyper,
            tokenizer,
            epochs: raw.train.epochs,
            batch_size: raw.train.batch_size,
            seed: raw.train.seed,
            dev_fraction: raw.train.dev_fraction,
        };
        train.validate()?;
        Ok(RunConfig {
            train,
            paths: raw.paths,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read_config(path)?)
    }
}

fn read_config(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

pub fn load_synth_config(path: &Path) -> Result<SynthConfig> {
    let cfg: SynthConfig = toml::from_str(&read_config(path)?).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn word_mode_picks_word_defaults() {
        let c = RunConfig::parse(
            r#"
            [model]
            kind = "cond"
            adversarial = true
            [tokenizer]
            mode = "word"
            max_len = 40
            [hyper]
            embed_dim = 16
            "#,
        )
        .unwrap();
        assert_eq!(c.train.tokenizer.max_len, 40);
        assert_eq!(c.train.tokenizer.min_freq, 2);
        assert_eq!(c.train.hyper.embed_dim, 16);
        let widths: Vec<usize> = c.train.hyper.conv_specs.iter().map(|s| s.width).collect();
        assert_eq!(widths, vec![3, 4, 5]);
        assert_eq!(c.train.epochs, 5);
        assert_eq!(c.train.batch_size, 32);
    }

    #[test]
    fn byte_mode_is_the_default() {
        let c = RunConfig::parse("[model]\nkind = \"gen\"\n").unwrap();
        assert_eq!(c.train.tokenizer.max_len, 1000);
        assert_eq!(c.train.hyper.conv_specs.len(), 5);
        assert_eq!(c.train.hyper.lambda_d, 1e-3);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            "[model]\nkind = \"gen\"\ncolour = 1\n",
            "[model]\nkind = \"gen\"\n[hyper]\nlambda = 1.0\n",
            "[model]\nkind = \"gen\"\n[tokenizer]\nmax_length = 3\n",
            "[model]\nkind = \"gen\"\n[extra]\n",
        ] {
            assert!(matches!(RunConfig::parse(text), Err(Error::Config(_))), "{text}");
        }
    }

    #[test]
    fn invalid_combinations_are_rejected() {
        assert!(RunConfig::parse("[model]\nkind = \"cond\"\ngenerative = true\n").is_err());
        assert!(RunConfig::parse("[model]\nkind = \"gen\"\n[hyper]\ndropout = 1.0\n").is_err());
        assert!(RunConfig::parse("[model]\nkind = \"nope\"\n").is_err());
        assert!(RunConfig::parse("[model]\nkind = \"gen\"\n[tokenizer]\nmode = \"char\"\n").is_err());
    }
}
