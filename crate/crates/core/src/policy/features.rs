use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::memory::{Frame, MemoryBank};
use crate::world::Action;

/// Number of actions in one policy inference.
pub const CHUNK_LEN: usize = 4;

/// Dimension of a feature vector for embedding dimension `d`.
pub fn feature_dim(d: usize) -> usize {
    4 * d + 2
}

/// `[e_I | bank mean | recent mean | e_f | bank fill | t / T_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Embedding dimension this vector was built for.
    pub fn embedding_dim(&self) -> usize {
        self.0.len().saturating_sub(2) / 4
    }

    /// The bank-mean slot.
    pub fn bank_slot(&self) -> &[f64] {
        let d = self.embedding_dim();
        &self.0[d..2 * d]
    }
}

fn accumulate_mean<'a>(
    out: &mut [f64],
    frames: impl IntoIterator<Item = &'a Frame>,
) -> Result<usize> {
    let mut n = 0usize;
    for f in frames {
        if f.embedding.len() != out.len() {
            return Err(Error::DimensionMismatch {
                expected: out.len(),
                got: f.embedding.len(),
            });
        }
        for (o, x) in out.iter_mut().zip(&f.embedding) {
            *o += x;
        }
        n += 1;
    }
    if n > 0 {
        for o in out.iter_mut() {
            *o /= n as f64;
        }
    }
    Ok(n)
}

pub fn featurize<'a>(
    instruction: &[f64],
    bank: &MemoryBank,
    recent: impl IntoIterator<Item = &'a Frame>,
    current: &Frame,
    t: u64,
    t_max: u64,
) -> Result<FeatureVector> {
    let d = instruction.len();
    if current.embedding.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: current.embedding.len(),
        });
    }
    let mut v = vec![0.0; feature_dim(d)];
    v[..d].copy_from_slice(instruction);
    accumulate_mean(&mut v[d..2 * d], bank.frames())?;
    accumulate_mean(&mut v[2 * d..3 * d], recent)?;
    v[3 * d..4 * d].copy_from_slice(&current.embedding);
    v[4 * d] = if bank.capacity() == 0 {
        0.0
    } else {
        bank.len() as f64 / bank.capacity() as f64
    };
    v[4 * d + 1] = if t_max == 0 {
        0.0
    } else {
        t as f64 / t_max as f64
    };
    Ok(FeatureVector(v))
}

/// Four consecutive actions. Executors stop at the first STOP.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionChunk(pub [Action; CHUNK_LEN]);

impl ActionChunk {
    pub fn actions(&self) -> &[Action; CHUNK_LEN] {
        &self.0
    }

    /// Actions up to and including the first STOP.
    pub fn executable(&self) -> &[Action] {
        match self.0.iter().position(|&a| a == Action::Stop) {
            Some(i) => &self.0[..=i],
            None => &self.0,
        }
    }

    /// Pad a prefix with STOP. Anything after a STOP is forced to STOP.
    pub fn from_prefix(prefix: &[Action]) -> Self {
        let mut out = [Action::Stop; CHUNK_LEN];
        for (slot, &a) in out.iter_mut().zip(prefix) {
            *slot = a;
            if a == Action::Stop {
                break;
            }
        }
        ActionChunk(out)
    }
}

impl std::fmt::Display for ActionChunk {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let names: Vec<&str> = self.0.iter().map(|a| a.symbol()).collect();
        write!(f, "[{}]", names.join(", "))
    }
}
