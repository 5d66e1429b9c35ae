//! Model and optimizer-state files.
//!
//! Layout: the magic line, one line of JSON header (architecture, switches,
//! hyperparameters, tokenizer, vocabulary, label and domain inventories, and
//! the name and shape of every parameter block), then the blocks themselves
//! as little-endian `f64` in header order.

use std::fs;
use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::data::{TokenizerSpec, Vocab};
use crate::error::{Error, Result};
use crate::model::{ArchKind, HyperParams, Network, Switches};
use crate::op::OpRng;
use crate::optim::{AdamConfig, AdamState};
use crate::tensor::Tensor;

pub const MODEL_MAGIC: &str = "DOMTEXT-MODEL";
pub const ADAM_MAGIC: &str = "DOMTEXT-ADAM";
pub const FORMAT_VERSION: u32 = 1;

/// A network together with everything needed to apply it to raw text.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub kind: ArchKind,
    pub switches: Switches,
    pub hyper: HyperParams,
    pub tokenizer: TokenizerSpec,
    pub vocab: Vocab,
    pub labels: Vec<String>,
    pub domains: Vec<String>,
    pub network: Network,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BlockInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelHeader {
    version: u32,
    arch: ArchKind,
    switches: Switches,
    hyper: HyperParams,
    tokenizer: TokenizerSpec,
    vocab: Vocab,
    labels: Vec<String>,
    domains: Vec<String>,
    has_generator: bool,
    blocks: Vec<BlockInfo>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AdamHeader {
    version: u32,
    config: AdamConfig,
    t: u64,
    blocks: Vec<BlockInfo>,
}

fn write_file(magic: &str, header: &impl Serialize, blocks: &[&Tensor]) -> Result<Vec<u8>> {
    let json = serde_json::to_string(header).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(json.len() + 32 + 8 * blocks.iter().map(|b| b.len()).sum::<usize>());
    out.extend_from_slice(magic.as_bytes());
    out.push(b'\n');
    out.extend_from_slice(json.as_bytes());
    out.push(b'\n');
    for b in blocks {
        for v in b.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

fn split_file<'a>(magic: &str, bytes: &'a [u8]) -> Result<(&'a str, &'a [u8])> {
    let rest = bytes
        .strip_prefix(magic.as_bytes())
        .and_then(|r| r.strip_prefix(b"\n"))
        .ok_or_else(|| Error::Format(format!("missing `{magic}` magic line")))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("unterminated header".into()))?;
    let header = std::str::from_utf8(&rest[..nl]).map_err(|e| Error::Format(e.to_string()))?;
    Ok((header, &rest[nl + 1..]))
}

fn read_blocks(infos: &[BlockInfo], mut data: &[u8]) -> Result<Vec<Tensor>> {
    let mut out = Vec::with_capacity(infos.len());
    for info in infos {
        let n: usize = info.shape.iter().product();
        if data.len() < 8 * n {
            return Err(Error::Format(format!("truncated block `{}`", info.name)));
        }
        let vals = data[..8 * n]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        data = &data[8 * n..];
        out.push(Tensor::from_vec(&info.shape, vals).map_err(|e| Error::Format(e.to_string()))?);
    }
    if !data.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes after last block", data.len())));
    }
    Ok(out)
}

impl TrainedModel {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let params = self.network.params();
        let header = ModelHeader {
            version: FORMAT_VERSION,
            arch: self.kind,
            switches: self.switches,
            hyper: self.hyper.clone(),
            tokenizer: self.tokenizer.clone(),
            vocab: self.vocab.clone(),
            labels: self.labels.clone(),
            domains: self.domains.clone(),
            has_generator: self.network.generator.is_some(),
            blocks: params
                .iter()
                .map(|(n, _, t)| BlockInfo {
                    name: n.clone(),
                    shape: t.shape().to_vec(),
                })
                .collect(),
        };
        let tensors: Vec<&Tensor> = params.iter().map(|(_, _, t)| *t).collect();
        write_file(MODEL_MAGIC, &header, &tensors)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (header, data) = split_file(MODEL_MAGIC, bytes)?;
        let h: ModelHeader = serde_json::from_str(header).map_err(|e| Error::Format(e.to_string()))?;
        if h.version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {}", h.version)));
        }
        let vocab = h.vocab.reindex();
        let blocks = read_blocks(&h.blocks, data)?;
        // Rebuild the layout, then overwrite every parameter by name.
        let mut rng = OpRng::seed_from_u64(0);
        let mut network = Network::new(
            h.arch,
            &h.hyper,
            vocab.size(),
            h.labels.len(),
            h.domains.len(),
            h.has_generator,
            &mut rng,
        )
        .map_err(|e| Error::Format(e.to_string()))?;
        let slots = network.params_mut();
        if slots.len() != blocks.len() {
            return Err(Error::Format(format!(
                "expected {} parameter blocks, found {}",
                slots.len(),
                blocks.len()
            )));
        }
        for ((name, _, slot), (info, block)) in slots.into_iter().zip(h.blocks.iter().zip(blocks)) {
            if *name != info.name || slot.shape() != block.shape() {
                return Err(Error::Format(format!(
                    "block `{}` {:?} does not match layout `{name}` {:?}",
                    info.name,
                    block.shape(),
                    slot.shape()
                )));
            }
            *slot = block;
        }
        Ok(TrainedModel {
            kind: h.arch,
            switches: h.switches,
            hyper: h.hyper,
            tokenizer: h.tokenizer,
            vocab,
            labels: h.labels,
            domains: h.domains,
            network,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// Serialises optimizer moments alongside the parameter names they track.
pub fn adam_to_bytes(state: &AdamState, names: &[String]) -> Result<Vec<u8>> {
    if !state.m.is_empty() && state.m.len() != names.len() {
        return Err(Error::Format("optimizer state does not match parameter list".into()));
    }
    let mut blocks = Vec::new();
    let mut infos = Vec::new();
    for (prefix, list) in [("m", &state.m), ("v", &state.v)] {
        for (name, t) in names.iter().zip(list.iter()) {
            infos.push(BlockInfo {
                name: format!("{prefix}.{name}"),
                shape: t.shape().to_vec(),
            });
            blocks.push(t);
        }
    }
    let header = AdamHeader {
        version: FORMAT_VERSION,
        config: state.config,
        t: state.t,
        blocks: infos,
    };
    write_file(ADAM_MAGIC, &header, &blocks)
}

pub fn adam_from_bytes(bytes: &[u8]) -> Result<AdamState> {
    let (header, data) = split_file(ADAM_MAGIC, bytes)?;
    let h: AdamHeader = serde_json::from_str(header).map_err(|e| Error::Format(e.to_string()))?;
    let mut blocks = read_blocks(&h.blocks, data)?;
    let half = blocks.len() / 2;
    let v = blocks.split_off(half);
    Ok(AdamState {
        config: h.config,
        t: h.t,
        m: blocks,
        v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::ConvSpec;

    fn model(kind: ArchKind, generator: bool) -> TrainedModel {
        let hyper = HyperParams {
            embed_dim: 3,
            conv_specs: vec![ConvSpec::new(2, 2), ConvSpec::new(3, 1)],
            ..HyperParams::default()
        };
        let vocab = Vocab::from_words(vec!["a".into(), "b".into()]);
        let network = Network::new(
            kind,
            &hyper,
            vocab.size(),
            2,
            3,
            generator,
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(5),
        )
        .unwrap();
        TrainedModel {
            kind,
            switches: Switches {
                adversarial: true,
                generative: generator,
            },
            hyper,
            tokenizer: TokenizerSpec {
                max_len: 6,
                ..TokenizerSpec::word()
            },
            vocab,
            labels: vec!["neg".into(), "pos".into()],
            domains: vec!["a".into(), "b".into(), "c".into()],
            network,
        }
    }

    #[test]
    fn round_trip_every_architecture() {
        for (kind, g) in [
            (ArchKind::Baseline, false),
            (ArchKind::Baseline, true),
            (ArchKind::Cond, false),
            (ArchKind::Gen, true),
        ] {
            let m = model(kind, g);
            let bytes = m.to_bytes().unwrap();
            let back = TrainedModel::from_bytes(&bytes).unwrap();
            assert_eq!(back, m);
            assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = model(ArchKind::Gen, true).to_bytes().unwrap();
        assert!(TrainedModel::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        assert!(TrainedModel::from_bytes(b"NOPE\n{}\n").is_err());
        let mut extra = bytes.clone();
        extra.extend_from_slice(&[0; 8]);
        assert!(TrainedModel::from_bytes(&extra).is_err());
    }

    #[test]
    fn adam_state_round_trip() {
        let m = model(ArchKind::Cond, false);
        let mut net = m.network.clone();
        let names: Vec<String> = net.params().into_iter().map(|(n, _, _)| n).collect();
        let mut grads = net.zeros_like();
        for (_, _, t) in grads.params_mut() {
            t.fill(0.25);
        }
        let mut state = AdamState::new(AdamConfig::with_lr(1e-3));
        state.step_network(&mut net, &grads).unwrap();
        state.step_network(&mut net, &grads).unwrap();
        let back = adam_from_bytes(&adam_to_bytes(&state, &names).unwrap()).unwrap();
        assert_eq!(back, state);
    }
}
