//! Memory-refined navigation with deviation-triggered expert corrections.

pub mod correction;
pub mod error;
pub mod eval;
pub mod jsonl;
pub mod memory;
pub mod pipeline;
pub mod policy;
pub mod world;

pub use error::{Error, Result};
pub use memory::{Frame, MemoryBank, MemoryMode, RefineParams, StreamState};
pub use policy::{ActionChunk, FeatureVector, PolicyParams, TrainConfig};
pub use world::{Action, AgentState, Episode, GridWorld, WorldGenParams};
