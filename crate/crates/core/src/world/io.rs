//! JSON Lines records for worlds and episodes.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AgentState, Episode, GridWorld, Instruction, Landmark, WorldGenParams};
use crate::error::{Error, Result};
use crate::jsonl::{self, Fixed3, Header, SCHEMA_VERSION};

pub const WORLD_KIND: &str = "world";
pub const EPISODE_KIND: &str = "episodes";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldRecord {
    pub schema: String,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    /// Alternating run lengths over the row-major grid, starting with free cells.
    pub occupancy_rle: Vec<u32>,
    pub landmarks: Vec<Landmark>,
    pub params: WorldGenParams,
}

impl WorldRecord {
    pub fn from_world(world: &GridWorld) -> Self {
        WorldRecord {
            schema: SCHEMA_VERSION.into(),
            seed: world.seed,
            width: world.width,
            height: world.height,
            cell_size: world.cell_size,
            occupancy_rle: encode_rle(&world.occupancy),
            landmarks: world.landmarks.clone(),
            params: world.params.clone(),
        }
    }

    pub fn into_world(self) -> Result<GridWorld> {
        check_schema(&self.schema)?;
        let occupancy = decode_rle(&self.occupancy_rle);
        if occupancy.len() != self.width * self.height {
            return Err(Error::InvalidParams(format!(
                "occupancy has {} cells, expected {}",
                occupancy.len(),
                self.width * self.height
            )));
        }
        Ok(GridWorld::from_parts(
            self.width,
            self.height,
            self.cell_size,
            occupancy,
            self.landmarks,
            self.seed,
            self.params,
        ))
    }
}

pub fn encode_rle(cells: &[bool]) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for &c in cells {
        if c == current {
            len += 1;
        } else {
            runs.push(len);
            current = c;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn decode_rle(runs: &[u32]) -> Vec<bool> {
    let mut out = Vec::new();
    for (i, &n) in runs.iter().enumerate() {
        out.extend(std::iter::repeat_n(i % 2 == 1, n as usize));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord(pub Fixed3, pub Fixed3, pub Fixed3);

impl From<&AgentState> for PoseRecord {
    fn from(s: &AgentState) -> Self {
        PoseRecord(Fixed3(s.x), Fixed3(s.y), Fixed3(s.heading))
    }
}

impl From<PoseRecord> for AgentState {
    fn from(p: PoseRecord) -> Self {
        AgentState::new(p.0 .0, p.1 .0, p.2 .0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub schema: String,
    pub id: u64,
    pub world_seed: u64,
    pub start: PoseRecord,
    pub goal: (Fixed3, Fixed3),
    pub expert_path: Vec<PoseRecord>,
    pub waypoint_ids: Vec<u32>,
    pub text: String,
    pub embedding: Vec<f64>,
    pub shortest_geodesic_length: f64,
}

impl From<&Episode> for EpisodeRecord {
    fn from(e: &Episode) -> Self {
        EpisodeRecord {
            schema: SCHEMA_VERSION.into(),
            id: e.id,
            world_seed: e.world_seed,
            start: (&e.start).into(),
            goal: (Fixed3(e.goal.0), Fixed3(e.goal.1)),
            expert_path: e.expert_path.iter().map(PoseRecord::from).collect(),
            waypoint_ids: e.instruction.waypoint_landmark_ids.clone(),
            text: e.instruction.text.clone(),
            embedding: e.instruction.embedding.clone(),
            shortest_geodesic_length: e.shortest_geodesic_length,
        }
    }
}

impl EpisodeRecord {
    pub fn into_episode(self) -> Result<Episode> {
        check_schema(&self.schema)?;
        Ok(Episode {
            id: self.id,
            world_seed: self.world_seed,
            start: self.start.into(),
            goal: (self.goal.0 .0, self.goal.1 .0),
            expert_path: self.expert_path.into_iter().map(AgentState::from).collect(),
            instruction: Instruction {
                waypoint_landmark_ids: self.waypoint_ids,
                text: self.text,
                embedding: self.embedding,
            },
            shortest_geodesic_length: self.shortest_geodesic_length,
        })
    }
}

fn check_schema(found: &str) -> Result<()> {
    if found != SCHEMA_VERSION {
        return Err(Error::SchemaMismatch {
            expected: SCHEMA_VERSION.into(),
            found: found.into(),
        });
    }
    Ok(())
}

pub fn write_world(path: &Path, world: &GridWorld, fingerprint: &str) -> Result<()> {
    jsonl::write(
        path,
        &Header::new(WORLD_KIND, fingerprint),
        &[WorldRecord::from_world(world)],
    )
}

pub fn read_world(path: &Path) -> Result<(Header, GridWorld)> {
    let (header, records) = jsonl::read::<WorldRecord>(path, WORLD_KIND)?;
    let record = records
        .into_iter()
        .next()
        .ok_or_else(|| Error::InvalidParams(format!("{} holds no world record", path.display())))?;
    Ok((header, record.into_world()?))
}

pub fn write_episodes(path: &Path, episodes: &[Episode], fingerprint: &str) -> Result<()> {
    let records: Vec<EpisodeRecord> = episodes.iter().map(EpisodeRecord::from).collect();
    jsonl::write(path, &Header::new(EPISODE_KIND, fingerprint), &records)
}

pub fn read_episodes(path: &Path) -> Result<(Header, Vec<Episode>)> {
    let (header, records) = jsonl::read::<EpisodeRecord>(path, EPISODE_KIND)?;
    let episodes = records
        .into_iter()
        .map(EpisodeRecord::into_episode)
        .collect::<Result<_>>()?;
    Ok((header, episodes))
}
