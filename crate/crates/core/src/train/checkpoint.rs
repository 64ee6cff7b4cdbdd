//! Self-describing JSON checkpoints.
//!
//! ```json
//! {
//!   "format": "iv4rec-checkpoint",
//!   "version": 1,
//!   "seed": 7,
//!   "iv_n": 10,
//!   "train_config": { ... },
//!   "pipeline": {
//!     "variant": "weighted",
//!     "recon": { "mlp0": { "layers": [ { "weight": { "rows": r, "cols": c, "data": [...] },
//!                                       "bias": [...], "activation": "relu" } ] },
//!                "mlp1": ..., "mlp2": ..., "alpha_input": "mean_pool" },
//!     "model": { "kind": "din_lite", "dim": d, "attention": ..., "head": ... | null,
//!                "w_ctx": { ... }, "default_user": [...] }
//!   }
//! }
//! ```
//!
//! Matrices are row-major. Floats round-trip exactly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Pipeline, TrainConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "iv4rec-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    /// Columns per IV matrix the reconstruction was trained with.
    pub iv_n: Option<usize>,
    pub train_config: TrainConfig,
    pub pipeline: Pipeline,
}

impl Checkpoint {
    pub fn new(pipeline: Pipeline, train_config: TrainConfig, iv_n: Option<usize>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            seed: train_config.seed,
            iv_n,
            train_config,
            pipeline,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str, source: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: source.to_string(),
            line: e.line(),
            message: e.to_string(),
        })?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(Error::Parse {
                path: source.to_string(),
                line: 1,
                message: format!(
                    "unsupported checkpoint {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                    ck.format, ck.version
                ),
            });
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, &path.display().to_string())
    }
}
