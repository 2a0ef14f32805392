//! Expert follower, featurizer, chunked linear policy and its trainer.

mod checkpoint;
mod expert;
mod features;
mod model;

pub use checkpoint::{load_checkpoint, params_checksum, save_checkpoint, Checkpoint};
pub use expert::{expert_action, Expert, BEARING_THRESHOLD};
pub use features::{feature_dim, featurize, ActionChunk, FeatureVector, CHUNK_LEN};
pub use model::{
    argmax, bc_train, loss_and_grad, predict_chunk, Grads, PolicyParams, Reward, Sample,
    TrainConfig, TrainOutcome,
};

use crate::error::Result;
use crate::world::{AgentState, Episode, GridWorld};

/// Episode-bound decision maker.
pub trait Actor {
    fn chunk(&mut self, state: &AgentState, features: &FeatureVector) -> Result<ActionChunk>;
}

/// Anything that can drive an episode one chunk at a time.
pub trait Policy: Sync {
    fn begin<'a>(
        &'a self,
        world: &'a GridWorld,
        episode: &'a Episode,
    ) -> Result<Box<dyn Actor + 'a>>;
}

struct Learned<'a>(&'a PolicyParams);

impl Actor for Learned<'_> {
    fn chunk(&mut self, _: &AgentState, features: &FeatureVector) -> Result<ActionChunk> {
        Ok(predict_chunk(self.0, features))
    }
}

impl Policy for PolicyParams {
    fn begin<'a>(&'a self, _: &'a GridWorld, _: &'a Episode) -> Result<Box<dyn Actor + 'a>> {
        Ok(Box::new(Learned(self)))
    }
}

/// The expert wrapped as a policy: it ignores features and reads the pose.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpertPolicy;

impl Actor for Expert<'_> {
    fn chunk(&mut self, state: &AgentState, _: &FeatureVector) -> Result<ActionChunk> {
        Expert::chunk(self, state)
    }
}

impl Policy for ExpertPolicy {
    fn begin<'a>(
        &'a self,
        world: &'a GridWorld,
        episode: &'a Episode,
    ) -> Result<Box<dyn Actor + 'a>> {
        Ok(Box::new(Expert::new(
            world,
            &episode.expert_path,
            world.params.success_radius,
        )?))
    }
}
