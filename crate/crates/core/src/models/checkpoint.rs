use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LatentFactorization, ModelState};
use crate::error::{Error, Result};
use crate::io::write_atomic;

pub const CHECKPOINT_FORMAT: &str = "rrae-checkpoint/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub library_version: String,
    pub state: ModelState,
    /// Batches trained when this was written.
    pub batches: u64,
    pub factorization: Option<LatentFactorization>,
}

impl Checkpoint {
    pub fn new(state: ModelState, batches: u64, factorization: Option<LatentFactorization>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            state,
            batches,
            factorization,
        }
    }
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<()> {
    write_atomic(path, &serde_json::to_vec(ck)?)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let raw: serde_json::Value = serde_json::from_slice(&fs::read(path)?)?;
    let field = |k: &str| raw.get(k).and_then(|v| v.as_str()).unwrap_or("<missing>").to_string();
    let (format, version) = (field("format"), field("library_version"));
    if format != CHECKPOINT_FORMAT {
        return Err(Error::Version { found: format, expected: CHECKPOINT_FORMAT.to_string() });
    }
    let ours = env!("CARGO_PKG_VERSION");
    if version != ours {
        return Err(Error::Version { found: format!("{format} ({version})"), expected: format!("{CHECKPOINT_FORMAT} ({ours})") });
    }
    let ck: Checkpoint = serde_json::from_value(raw)?;
    ck.state.spec.validate()?;
    Ok(ck)
}
