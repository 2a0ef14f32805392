use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::features::CHUNK_LEN;
use super::model::PolicyParams;
use crate::error::{Error, Result};
use crate::world::Action;

pub const CHECKPOINT_FORMAT: &str = "deconav-policy";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk policy: shapes, seed, row-major weights and a SHA-256 over the
/// little-endian bytes of every parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub fingerprint: String,
    pub heads: usize,
    pub actions: usize,
    pub feature_dim: usize,
    pub input_dim: usize,
    pub init_seed: u64,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub checksum: String,
}

pub fn params_checksum(p: &PolicyParams) -> String {
    let mut h = Sha256::new();
    h.update((p.feature_dim as u64).to_le_bytes());
    for x in p.weights.iter().chain(&p.bias) {
        h.update(x.to_le_bytes());
    }
    hex::encode(h.finalize())
}

impl Checkpoint {
    pub fn new(params: &PolicyParams, fingerprint: &str) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            fingerprint: fingerprint.into(),
            heads: CHUNK_LEN,
            actions: Action::COUNT,
            feature_dim: params.feature_dim,
            input_dim: PolicyParams::input_dim(params.feature_dim),
            init_seed: params.init_seed,
            weights: params.weights.clone(),
            bias: params.bias.clone(),
            checksum: params_checksum(params),
        }
    }

    pub fn into_params(self) -> Result<PolicyParams> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        if self.heads != CHUNK_LEN
            || self.actions != Action::COUNT
            || self.input_dim != PolicyParams::input_dim(self.feature_dim)
        {
            return Err(Error::Checkpoint("inconsistent shapes".into()));
        }
        let params = PolicyParams {
            feature_dim: self.feature_dim,
            weights: self.weights,
            bias: self.bias,
            init_seed: self.init_seed,
        };
        params.validate()?;
        if params_checksum(&params) != self.checksum {
            return Err(Error::Checkpoint("checksum mismatch".into()));
        }
        Ok(params)
    }
}

pub fn save_checkpoint(path: &Path, params: &PolicyParams, fingerprint: &str) -> Result<()> {
    let text = serde_json::to_string(&Checkpoint::new(params, fingerprint))?;
    crate::jsonl::write_atomic(path, text.as_bytes())
}

pub fn load_checkpoint(path: &Path) -> Result<(Checkpoint, PolicyParams)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ck: Checkpoint = serde_json::from_str(&text)?;
    let params = ck.clone().into_params()?;
    Ok((ck, params))
}
