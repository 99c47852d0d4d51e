//! Turn-based two-agent environments and the episode runner.
//!
//! States cross module boundaries as plain `Vec<f64>`: the IPD state is its
//! integer id, particle states are the flat vector from
//! [`ParticleState::to_vec`]. [`EnvId::features`] gives the model input.

pub(crate) mod ipd;
mod particle;
mod trajectory;

pub use ipd::{ipd_payoff, ipd_step, IpdAction, IpdState};
pub use particle::{
    distance, particle_step, tick, Body, ParticleAction, ParticleState, Scenario, ARENA,
    CONTACT_RADIUS, DAMPING, DT_ENV, FORCE, MASS, SPAWN,
};
pub use trajectory::{read_jsonl, write_jsonl, RecordLine, Trajectory, TransitionRecord};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::seeds;
use crate::Turn;

pub const IPD_HORIZON: usize = 20;
pub const PARTICLE_HORIZON: usize = 68;

#[derive(Debug, thiserror::Error)]
pub enum GameError {
    #[error("{actor} emitted illegal action {action} at step {step}")]
    IllegalAction {
        actor: Turn,
        step: usize,
        action: usize,
    },
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error("environment fault: {0}")]
    Fault(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("policy failed at step {step}: {message}")]
    Policy { step: usize, message: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvId {
    Ipd,
    Keepaway,
    Predatorprey,
}

impl std::str::FromStr for EnvId {
    type Err = GameError;

    fn from_str(s: &str) -> Result<Self, GameError> {
        match s {
            "ipd" => Ok(EnvId::Ipd),
            "keepaway" => Ok(EnvId::Keepaway),
            "predatorprey" => Ok(EnvId::Predatorprey),
            other => Err(GameError::Parse(format!(
                "unknown environment '{other}' (ipd, keepaway, predatorprey)"
            ))),
        }
    }
}

impl std::fmt::Display for EnvId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EnvId::Ipd => "ipd",
            EnvId::Keepaway => "keepaway",
            EnvId::Predatorprey => "predatorprey",
        })
    }
}

impl EnvId {
    pub fn scenario(self) -> Option<Scenario> {
        match self {
            EnvId::Ipd => None,
            EnvId::Keepaway => Some(Scenario::KeepAway),
            EnvId::Predatorprey => Some(Scenario::PredatorPrey),
        }
    }

    pub fn horizon(self) -> usize {
        match self {
            EnvId::Ipd => IPD_HORIZON,
            _ => PARTICLE_HORIZON,
        }
    }

    pub fn num_actions(self) -> usize {
        match self {
            EnvId::Ipd => 2,
            _ => 5,
        }
    }

    pub fn is_tabular(self) -> bool {
        self == EnvId::Ipd
    }

    /// Length of the serialized state vector.
    pub fn state_dim(self) -> usize {
        self.scenario().map_or(1, Scenario::state_dim)
    }

    /// Length of the model input vector.
    pub fn feature_dim(self) -> usize {
        match self {
            EnvId::Ipd => 5,
            _ => self.state_dim(),
        }
    }

    pub fn features(self, state: &[f64]) -> Result<Vec<f64>, GameError> {
        match self.scenario() {
            None => Ok(ipd::parse_state(state)?.one_hot().to_vec()),
            Some(sc) => {
                ParticleState::from_vec(state, sc)?;
                Ok(state.to_vec())
            }
        }
    }

    pub fn reset<R: Rng + ?Sized>(self, rng: &mut R) -> Vec<f64> {
        match self.scenario() {
            None => vec![IpdState::Start.id() as f64],
            Some(sc) => {
                let mut pos = || {
                    [
                        rng.random_range(-SPAWN..=SPAWN),
                        rng.random_range(-SPAWN..=SPAWN),
                    ]
                };
                let leader = Body {
                    pos: pos(),
                    vel: [0.0; 2],
                };
                let follower = Body {
                    pos: pos(),
                    vel: [0.0; 2],
                };
                let landmark = (sc == Scenario::KeepAway).then(&mut pos);
                ParticleState {
                    leader,
                    follower,
                    landmark,
                }
                .to_vec()
            }
        }
    }

    /// Applies `action` by the agent whose turn it is at `step`.
    pub fn step(
        self,
        state: &[f64],
        action: usize,
        step: usize,
    ) -> Result<(Vec<f64>, [f64; 2]), GameError> {
        let turn = Turn::of_step(step);
        match self.scenario() {
            None => {
                let s = ipd::parse_state(state)?;
                if s == IpdState::Start && turn == Turn::Follower {
                    return Err(GameError::Protocol(format!(
                        "follower cannot move from Start (step {step})"
                    )));
                }
                let a = IpdAction::from_id(action).ok_or(GameError::IllegalAction {
                    actor: turn,
                    step,
                    action,
                })?;
                let (n, r) = ipd_step(s, a, turn);
                Ok((vec![n.id() as f64], r))
            }
            Some(sc) => {
                let s = ParticleState::from_vec(state, sc)?;
                let a = ParticleAction::from_id(action).ok_or(GameError::IllegalAction {
                    actor: turn,
                    step,
                    action,
                })?;
                let (n, r) = particle_step(&s, a, turn, sc)?;
                Ok((n.to_vec(), r))
            }
        }
    }

    /// Leader and follower positions of a particle state.
    pub fn positions(self, state: &[f64]) -> Option<[[f64; 2]; 2]> {
        let s = ParticleState::from_vec(state, self.scenario()?).ok()?;
        Some([s.leader.pos, s.follower.pos])
    }
}

/// A decision rule for either seat.
pub trait Policy {
    fn act(
        &self,
        state: &[f64],
        turn: Turn,
        step: usize,
        rng: &mut dyn RngCore,
    ) -> Result<usize, GameError>;
}

impl<P: Policy + ?Sized> Policy for &P {
    fn act(
        &self,
        state: &[f64],
        turn: Turn,
        step: usize,
        rng: &mut dyn RngCore,
    ) -> Result<usize, GameError> {
        (**self).act(state, turn, step, rng)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn act(
        &self,
        state: &[f64],
        turn: Turn,
        step: usize,
        rng: &mut dyn RngCore,
    ) -> Result<usize, GameError> {
        (**self).act(state, turn, step, rng)
    }
}

/// Always the same action id.
#[derive(Clone, Copy, Debug)]
pub struct ConstantPolicy(pub usize);

impl Policy for ConstantPolicy {
    fn act(&self, _: &[f64], _: Turn, _: usize, _: &mut dyn RngCore) -> Result<usize, GameError> {
        Ok(self.0)
    }
}

/// Wraps a closure as a policy.
pub struct FnPolicy<F>(pub F);

impl<F> Policy for FnPolicy<F>
where
    F: Fn(&[f64], Turn, usize, &mut dyn RngCore) -> usize,
{
    fn act(
        &self,
        state: &[f64],
        turn: Turn,
        step: usize,
        rng: &mut dyn RngCore,
    ) -> Result<usize, GameError> {
        Ok((self.0)(state, turn, step, rng))
    }
}

/// Plays `horizon` alternating decisions, leader first. All randomness
/// (initial state and both policies) comes from one stream seeded by `seed`.
pub fn run_episode(
    env: EnvId,
    leader: &dyn Policy,
    follower: &dyn Policy,
    horizon: usize,
    episode: usize,
    seed: u64,
) -> Result<Trajectory, GameError> {
    let mut rng = seeds::rng(seed);
    let mut state = env.reset(&mut rng);
    let mut records = Vec::with_capacity(horizon);
    for step in 0..horizon {
        let turn = Turn::of_step(step);
        let policy = if turn == Turn::Leader {
            leader
        } else {
            follower
        };
        let action = policy.act(&state, turn, step, &mut rng)?;
        if action >= env.num_actions() {
            return Err(GameError::IllegalAction {
                actor: turn,
                step,
                action,
            });
        }
        let (next, reward) = env.step(&state, action, step)?;
        records.push(TransitionRecord {
            step,
            actor: turn,
            state,
            action,
            reward,
            next_state: next.clone(),
        });
        state = next;
    }
    Ok(Trajectory {
        episode,
        seed,
        env,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_cooperate() {
        let t = run_episode(EnvId::Ipd, &ConstantPolicy(0), &ConstantPolicy(0), 20, 0, 1).unwrap();
        assert_eq!(t.returns(), [30.0, 30.0]);
        assert_eq!(
            t.records
                .iter()
                .filter(|r| r.actor == Turn::Follower)
                .count(),
            10
        );
    }

    #[test]
    fn defect_against_cooperate() {
        let t = run_episode(EnvId::Ipd, &ConstantPolicy(1), &ConstantPolicy(0), 20, 0, 1).unwrap();
        assert_eq!(t.returns(), [50.0, 0.0]);
    }

    #[test]
    fn illegal_action_names_actor_and_step() {
        match run_episode(EnvId::Ipd, &ConstantPolicy(0), &ConstantPolicy(7), 20, 0, 1) {
            Err(GameError::IllegalAction {
                actor: Turn::Follower,
                step: 1,
                action: 7,
            }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn particle_episode_is_deterministic_and_alternates() {
        let pol = FnPolicy(|_: &[f64], _: Turn, _: usize, rng: &mut dyn RngCore| {
            (rng.next_u32() % 5) as usize
        });
        let a = run_episode(EnvId::Predatorprey, &pol, &pol, 68, 3, 99).unwrap();
        let b = run_episode(EnvId::Predatorprey, &pol, &pol, 68, 3, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.records.len(), 68);
        for r in &a.records {
            assert_eq!(r.actor, Turn::of_step(r.step));
        }
        for w in a.records.windows(2) {
            assert_eq!(w[0].next_state, w[1].state);
        }
    }

    #[test]
    fn env_names_roundtrip() {
        for e in [EnvId::Ipd, EnvId::Keepaway, EnvId::Predatorprey] {
            assert_eq!(e.to_string().parse::<EnvId>().unwrap(), e);
        }
    }
}
