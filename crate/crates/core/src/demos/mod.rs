//! Demonstrators and demonstration datasets.

mod dataset;
mod experts;
mod qlearn;
mod tft;

pub use dataset::{DemoDataset, DemoMeta};
pub use experts::{chase, evade, hits_wall, ExpertRole, ScriptedExpert};
pub use qlearn::{train_q_demonstrator, QPolicy, QTable, QTraining};
pub use tft::{tft_def, tft_imp, TftPolicy, TftVariant};

use serde::{Deserialize, Serialize};

use crate::games::{run_episode, ConstantPolicy, EnvId, GameError, Policy};
use crate::seeds;
use crate::Turn;

pub const DEFAULT_EPISODES: usize = 200;
pub const Q_TRAINING_EPISODES: usize = 5000;
/// Seed index reserved for demonstrator training, outside the episode range.
const TRAINING_STREAM: u64 = 1 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Demonstrator {
    Q,
    TftDef,
    TftImp,
    ConstC,
    ConstD,
    Chaser,
    Evader,
    GoalSeeker,
    Blocker,
}

impl Demonstrator {
    pub fn id(self) -> &'static str {
        match self {
            Demonstrator::Q => "q",
            Demonstrator::TftDef => "tft-def",
            Demonstrator::TftImp => "tft-imp",
            Demonstrator::ConstC => "const-c",
            Demonstrator::ConstD => "const-d",
            Demonstrator::Chaser => "chaser",
            Demonstrator::Evader => "evader",
            Demonstrator::GoalSeeker => "goal-seeker",
            Demonstrator::Blocker => "blocker",
        }
    }

    fn supports(self, env: EnvId) -> bool {
        match self {
            Demonstrator::Q
            | Demonstrator::TftDef
            | Demonstrator::TftImp
            | Demonstrator::ConstC
            | Demonstrator::ConstD => env == EnvId::Ipd,
            _ => env != EnvId::Ipd,
        }
    }

    /// Default `(leader, follower)` demonstrators per environment.
    pub fn defaults(env: EnvId) -> (Demonstrator, Demonstrator) {
        match env {
            EnvId::Ipd => (Demonstrator::Q, Demonstrator::TftDef),
            EnvId::Predatorprey => (Demonstrator::Chaser, Demonstrator::Evader),
            EnvId::Keepaway => (Demonstrator::GoalSeeker, Demonstrator::Blocker),
        }
    }
}

impl std::str::FromStr for Demonstrator {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, GameError> {
        const ALL: [Demonstrator; 9] = [
            Demonstrator::Q,
            Demonstrator::TftDef,
            Demonstrator::TftImp,
            Demonstrator::ConstC,
            Demonstrator::ConstD,
            Demonstrator::Chaser,
            Demonstrator::Evader,
            Demonstrator::GoalSeeker,
            Demonstrator::Blocker,
        ];
        ALL.into_iter()
            .find(|d| d.id() == s)
            .ok_or_else(|| GameError::Parse(format!("unknown demonstrator '{s}'")))
    }
}

fn fixed_policy(env: EnvId, d: Demonstrator) -> Box<dyn Policy + Send + Sync> {
    match d {
        Demonstrator::TftDef => Box::new(TftPolicy(TftVariant::Def)),
        Demonstrator::TftImp => Box::new(TftPolicy(TftVariant::Imp)),
        Demonstrator::ConstC => Box::new(ConstantPolicy(0)),
        Demonstrator::ConstD => Box::new(ConstantPolicy(1)),
        Demonstrator::Chaser
        | Demonstrator::Evader
        | Demonstrator::GoalSeeker
        | Demonstrator::Blocker => {
            let role = match d {
                Demonstrator::Chaser => ExpertRole::Chaser,
                Demonstrator::Evader => ExpertRole::Evader,
                Demonstrator::GoalSeeker => ExpertRole::GoalSeeker,
                _ => ExpertRole::Blocker,
            };
            Box::new(ScriptedExpert {
                role,
                scenario: env.scenario().expect("particle env"),
            })
        }
        Demonstrator::Q => unreachable!("Q demonstrators are trained"),
    }
}

pub type DemoPolicy = Box<dyn Policy + Send + Sync>;

/// Builds both seats. A Q seat is trained against the other, fixed seat.
pub fn build_demonstrators(
    env: EnvId,
    leader: Demonstrator,
    follower: Demonstrator,
    master_seed: u64,
) -> Result<(DemoPolicy, DemoPolicy), GameError> {
    for d in [leader, follower] {
        if !d.supports(env) {
            return Err(GameError::Parse(format!(
                "demonstrator '{}' cannot play {env}",
                d.id()
            )));
        }
    }
    let mut rng = seeds::rng(seeds::derive(master_seed, TRAINING_STREAM));
    match (leader, follower) {
        (Demonstrator::Q, Demonstrator::Q) => Err(GameError::Parse(
            "at most one seat can be a Q demonstrator".into(),
        )),
        (Demonstrator::Q, f) => {
            let opp = fixed_policy(env, f);
            let q = train_q_demonstrator(
                Turn::Leader,
                &opp,
                Q_TRAINING_EPISODES,
                QTable::default(),
                &mut rng,
            )?;
            Ok((Box::new(QPolicy(q.table)), opp))
        }
        (l, Demonstrator::Q) => {
            let opp = fixed_policy(env, l);
            let q = train_q_demonstrator(
                Turn::Follower,
                &opp,
                Q_TRAINING_EPISODES,
                QTable::default(),
                &mut rng,
            )?;
            Ok((opp, Box::new(QPolicy(q.table))))
        }
        (l, f) => Ok((fixed_policy(env, l), fixed_policy(env, f))),
    }
}

/// Episode `i` is seeded with `derive(master_seed, i)`.
pub fn generate_demos(
    env: EnvId,
    leader: &dyn Policy,
    follower: &dyn Policy,
    ids: (&str, &str),
    episodes: usize,
    master_seed: u64,
) -> Result<DemoDataset, GameError> {
    if episodes == 0 {
        return Err(GameError::Parse(
            "need at least one demonstration episode".into(),
        ));
    }
    let episode_seeds: Vec<u64> = (0..episodes as u64)
        .map(|i| seeds::derive(master_seed, i))
        .collect();
    let trajectories = episode_seeds
        .iter()
        .enumerate()
        .map(|(i, &s)| run_episode(env, leader, follower, env.horizon(), i, s))
        .collect::<Result<Vec<_>, _>>()?;
    let meta = DemoMeta {
        env,
        leader: ids.0.to_string(),
        follower: ids.1.to_string(),
        master_seed,
        episodes,
        episode_seeds,
        stamp: format!(
            "lsdn-demos/{} {env} {}-vs-{} seed={master_seed}",
            env!("CARGO_PKG_VERSION"),
            ids.0,
            ids.1
        ),
    };
    Ok(DemoDataset { meta, trajectories })
}
