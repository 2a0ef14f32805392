use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::correction::CollectionConfig;
use crate::error::{Error, Result};
use crate::eval::RolloutConfig;
use crate::memory::{MemoryMode, RefineParams};
use crate::policy::{Reward, TrainConfig};
use crate::world::{EpisodeParams, WorldGenParams};

/// Environment variable that replaces `base_seed`.
pub const SEED_ENV: &str = "DECONAV_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EpisodeCounts {
    pub train: usize,
    pub val: usize,
    /// Stitched episodes in the long-horizon split.
    pub long_horizon: usize,
}

impl Default for EpisodeCounts {
    fn default() -> Self {
        EpisodeCounts {
            train: 300,
            val: 200,
            long_horizon: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LongHorizonParams {
    /// Largest geodesic gap bridged between two episodes.
    pub max_gap: f64,
    /// Stitched episodes must be strictly longer than this.
    pub min_length: f64,
}

impl Default for LongHorizonParams {
    fn default() -> Self {
        LongHorizonParams {
            max_gap: 2.0,
            min_length: 18.0,
        }
    }
}

/// Values tried along each sweep axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepValues {
    pub k: Vec<usize>,
    pub lambda_r: Vec<f64>,
    pub w_v: Vec<f64>,
    pub tau: Vec<f64>,
    pub data_budget: Vec<usize>,
}

impl Default for SweepValues {
    fn default() -> Self {
        SweepValues {
            k: vec![2, 4, 8, 12],
            lambda_r: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            w_v: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            tau: vec![1.0, 3.0, 6.0],
            data_budget: vec![250, 500, 1000],
        }
    }
}

/// Everything a pipeline run depends on. Loaded from TOML; every key is
/// optional and falls back to the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub base_seed: u64,
    pub seed_count: u64,
    /// Not part of the fingerprint.
    pub output_dir: PathBuf,
    pub world: WorldGenParams,
    pub episodes: EpisodeParams,
    pub counts: EpisodeCounts,
    pub long_horizon: LongHorizonParams,
    /// Mode used by single-mode commands such as `eval`. Not part of the
    /// fingerprint: artifacts name their own mode.
    pub memory_mode: MemoryMode,
    pub refine: RefineParams,
    pub t_max: u64,
    pub stall_limit: u32,
    pub reward: Reward,
    pub collection: CollectionConfig,
    /// Supervised training from scratch on expert demonstrations.
    pub train: TrainConfig,
    /// Fine-tuning on demonstrations plus correction pairs.
    pub finetune: TrainConfig,
    pub sweep: SweepValues,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            base_seed: 0,
            seed_count: 3,
            output_dir: PathBuf::from("runs/default"),
            world: WorldGenParams::default(),
            episodes: EpisodeParams::default(),
            counts: EpisodeCounts::default(),
            long_horizon: LongHorizonParams::default(),
            memory_mode: MemoryMode::Amr,
            refine: RefineParams::default(),
            t_max: 500,
            stall_limit: 20,
            reward: Reward::default(),
            collection: CollectionConfig::default(),
            train: TrainConfig::default(),
            finetune: TrainConfig {
                epochs: 10,
                ..TrainConfig::default()
            },
            sweep: SweepValues::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Apply `DECONAV_SEED` when set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(v) = std::env::var(SEED_ENV) {
            self.base_seed = v.trim().parse().map_err(|_| {
                Error::Config(format!("{SEED_ENV}={v:?} is not an unsigned integer"))
            })?;
        }
        Ok(())
    }

    pub fn seeds(&self) -> Vec<u64> {
        (0..self.seed_count).map(|i| self.base_seed + i).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.seed_count == 0 {
            return bad("seed_count must be positive");
        }
        if self.base_seed.checked_add(self.seed_count).is_none() {
            return bad("seed range overflows");
        }
        if self.counts.train == 0 || self.counts.val == 0 {
            return bad("train and val episode counts must be positive");
        }
        if self.counts.long_horizon == 0 {
            return bad("long_horizon episode count must be positive");
        }
        if !(self.long_horizon.max_gap >= 0.0 && self.long_horizon.min_length >= 0.0) {
            return bad("long_horizon gap and length must be non-negative");
        }
        let s = &self.sweep;
        if s.k.is_empty()
            || s.lambda_r.is_empty()
            || s.w_v.is_empty()
            || s.tau.is_empty()
            || s.data_budget.is_empty()
        {
            return bad("every sweep axis needs at least one value");
        }
        if s.k.contains(&0) || s.data_budget.contains(&0) {
            return bad("sweep K and data budgets must be positive");
        }
        self.world.validate()?;
        self.episodes.validate()?;
        self.rollout(self.memory_mode).validate()?;
        self.collection.validate()?;
        self.train.validate()?;
        self.finetune.validate()?;
        for &k in &s.k {
            RefineParams { k, ..self.refine }.validate()?;
        }
        for &lambda_r in &s.lambda_r {
            RefineParams {
                lambda_r,
                ..self.refine
            }
            .validate()?;
        }
        for &w_v in &s.w_v {
            RefineParams {
                w_v,
                w_t: 1.0 - w_v,
                ..self.refine
            }
            .validate()?;
        }
        for &tau in &s.tau {
            CollectionConfig {
                tau,
                ..self.collection.clone()
            }
            .validate()?;
        }
        Ok(())
    }

    pub fn rollout(&self, mode: MemoryMode) -> RolloutConfig {
        RolloutConfig {
            t_max: self.t_max,
            stall_limit: self.stall_limit,
            memory_mode: mode,
            refine: self.refine,
            reward: self.reward,
        }
    }

    /// Hash of everything but the output directory and the single-command
    /// memory mode.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        c.memory_mode = MemoryMode::default();
        fingerprint("config", &c)
    }
}

/// Short SHA-256 over a tag and the JSON form of `value`.
pub fn fingerprint<T: Serialize + ?Sized>(tag: &str, value: &T) -> String {
    let mut h = Sha256::new();
    h.update(tag.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(value).expect("config values serialize"));
    hex::encode(&h.finalize()[..8])
}
