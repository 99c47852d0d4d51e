use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::games::{read_jsonl, write_jsonl, EnvId, GameError, Trajectory};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemoMeta {
    pub env: EnvId,
    pub leader: String,
    pub follower: String,
    pub master_seed: u64,
    pub episodes: usize,
    pub episode_seeds: Vec<u64>,
    /// Deterministic label of the generator run.
    pub stamp: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: DemoMeta,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DemoDataset {
    pub meta: DemoMeta,
    pub trajectories: Vec<Trajectory>,
}

impl DemoDataset {
    pub fn check(&self) -> Result<(), GameError> {
        if self.meta.episodes != self.trajectories.len()
            || self.meta.episode_seeds.len() != self.trajectories.len()
        {
            return Err(GameError::Parse(format!(
                "metadata lists {} episodes ({} seeds) but {} trajectories are present",
                self.meta.episodes,
                self.meta.episode_seeds.len(),
                self.trajectories.len()
            )));
        }
        for t in &self.trajectories {
            if t.env != self.meta.env {
                return Err(GameError::Parse(format!(
                    "episode {} is from {}, dataset is {}",
                    t.episode, t.env, self.meta.env
                )));
            }
            t.validate()?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec(&Header {
            meta: self.meta.clone(),
        })
        .expect("metadata serializes");
        out.push(b'\n');
        write_jsonl(&mut out, &self.trajectories).expect("writing to memory");
        out
    }

    pub fn from_reader<R: BufRead>(mut input: R) -> Result<Self, GameError> {
        let mut first = String::new();
        input
            .read_line(&mut first)
            .map_err(|e| GameError::Parse(format!("header: {e}")))?;
        let header: Header =
            serde_json::from_str(&first).map_err(|e| GameError::Parse(format!("header: {e}")))?;
        let mut trajectories = read_jsonl(input, header.meta.env)?;
        for (t, &seed) in trajectories.iter_mut().zip(&header.meta.episode_seeds) {
            t.seed = seed;
        }
        let ds = Self {
            meta: header.meta,
            trajectories,
        };
        ds.check()?;
        Ok(ds)
    }

    pub fn write(&self, path: &Path) -> Result<(), GameError> {
        let io = |source| GameError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(&self.to_bytes()).map_err(io)
    }

    pub fn read(path: &Path) -> Result<Self, GameError> {
        let f = std::fs::File::open(path).map_err(|source| GameError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_reader(BufReader::new(f))
    }
}
