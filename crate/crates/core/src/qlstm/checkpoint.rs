use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const FORMAT: &str = "qseries-checkpoint/1";

/// Self-describing JSON checkpoint. Floats are written with shortest
/// round-trip formatting, so a save/load cycle is bit-exact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint<M> {
    pub format: String,
    pub kind: String,
    pub seed: u64,
    pub n_params: usize,
    pub model: M,
}

impl<M> Checkpoint<M> {
    pub fn new(kind: impl Into<String>, seed: u64, n_params: usize, model: M) -> Self {
        Self {
            format: FORMAT.to_string(),
            kind: kind.into(),
            seed,
            n_params,
            model,
        }
    }
}

pub fn save_checkpoint<M: Serialize>(path: &Path, ckpt: &Checkpoint<M>) -> Result<()> {
    let text = serde_json::to_string_pretty(ckpt).map_err(|e| Error::Serde(e.to_string()))?;
    crate::experiment::write_atomic(path, text.as_bytes())
}

pub fn load_checkpoint<M: DeserializeOwned>(path: &Path) -> Result<Checkpoint<M>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let ckpt: Checkpoint<M> = serde_json::from_str(&text).map_err(|e| Error::Serde(e.to_string()))?;
    if ckpt.format != FORMAT {
        return Err(Error::Serde(format!("unsupported checkpoint format {:?}", ckpt.format)));
    }
    Ok(ckpt)
}
