use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::NetworkConfig;
use super::params::NetworkParams;
use crate::data::NormalizationSpec;
use crate::error::{Error, Result};

const FORMAT: &str = "pourseq-checkpoint";
const VERSION: u32 = 1;

/// Self-describing model file: architecture, weights in layer order, and the
/// normalization fitted at training time. Stored as JSON; floats are written
/// in shortest round-trip form and parsed exactly, so save/load is lossless.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: NetworkConfig,
    pub normalization: NormalizationSpec,
    pub params: NetworkParams,
}

impl Checkpoint {
    pub fn new(config: NetworkConfig, normalization: NormalizationSpec, params: NetworkParams) -> Self {
        Checkpoint { format: FORMAT.to_string(), version: VERSION, config, normalization, params }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ckpt: Checkpoint = serde_json::from_str(text)?;
        if ckpt.format != FORMAT || ckpt.version != VERSION {
            return Err(Error::invalid(format!(
                "unsupported checkpoint `{}` v{} (expected `{FORMAT}` v{VERSION})",
                ckpt.format, ckpt.version
            )));
        }
        ckpt.params.check(&ckpt.config)?;
        if ckpt.normalization.mode != ckpt.config.head {
            return Err(Error::invalid("checkpoint normalization mode disagrees with the output head"));
        }
        Ok(ckpt)
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = ckpt.to_json()?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_json(&text)
}
