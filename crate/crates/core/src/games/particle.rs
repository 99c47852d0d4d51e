use serde::{Deserialize, Serialize};

use super::GameError;
use crate::Turn;

pub const ARENA: f64 = 1.0;
pub const DT_ENV: f64 = 0.1;
pub const DAMPING: f64 = 0.25;
pub const MASS: f64 = 1.0;
pub const FORCE: f64 = 1.0;
pub const CONTACT_RADIUS: f64 = 0.15;
pub const CONTACT_REWARD: f64 = 10.0;
pub const PREY_MAX_SPEED: f64 = 1.3;
pub const DEFAULT_MAX_SPEED: f64 = 1.0;
/// Initial positions are drawn from `[-SPAWN, SPAWN]^2`.
pub const SPAWN: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// Leader chases, follower evades.
    PredatorPrey,
    /// Leader heads for the landmark, follower blocks it.
    KeepAway,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ParticleAction {
    Noop,
    Up,
    Down,
    Left,
    Right,
}

impl ParticleAction {
    pub const ALL: [ParticleAction; 5] = [
        ParticleAction::Noop,
        ParticleAction::Up,
        ParticleAction::Down,
        ParticleAction::Left,
        ParticleAction::Right,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn force(self) -> [f64; 2] {
        match self {
            ParticleAction::Noop => [0.0, 0.0],
            ParticleAction::Up => [0.0, FORCE],
            ParticleAction::Down => [0.0, -FORCE],
            ParticleAction::Left => [-FORCE, 0.0],
            ParticleAction::Right => [FORCE, 0.0],
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Body {
    pub pos: [f64; 2],
    pub vel: [f64; 2],
}

impl Body {
    pub fn at(x: f64, y: f64) -> Self {
        Self {
            pos: [x, y],
            vel: [0.0, 0.0],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub leader: Body,
    pub follower: Body,
    pub landmark: Option<[f64; 2]>,
}

pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl ParticleState {
    pub fn body(&self, agent: Turn) -> &Body {
        match agent {
            Turn::Leader => &self.leader,
            Turn::Follower => &self.follower,
        }
    }

    pub fn gap(&self) -> f64 {
        distance(self.leader.pos, self.follower.pos)
    }

    /// `[lx, ly, lvx, lvy, fx, fy, fvx, fvy]`, then `[mx, my]` with a landmark.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(10);
        for b in [&self.leader, &self.follower] {
            v.extend_from_slice(&b.pos);
            v.extend_from_slice(&b.vel);
        }
        if let Some(m) = self.landmark {
            v.extend_from_slice(&m);
        }
        v
    }

    pub fn from_vec(v: &[f64], scenario: Scenario) -> Result<Self, GameError> {
        let want = scenario.state_dim();
        if v.len() != want {
            return Err(GameError::Parse(format!(
                "{scenario:?} state needs {want} values, got {}",
                v.len()
            )));
        }
        let body = |o: usize| Body {
            pos: [v[o], v[o + 1]],
            vel: [v[o + 2], v[o + 3]],
        };
        Ok(Self {
            leader: body(0),
            follower: body(4),
            landmark: (scenario == Scenario::KeepAway).then(|| [v[8], v[9]]),
        })
    }
}

impl Scenario {
    pub fn state_dim(self) -> usize {
        match self {
            Scenario::PredatorPrey => 8,
            Scenario::KeepAway => 10,
        }
    }

    pub fn max_speed(self, agent: Turn) -> f64 {
        match (self, agent) {
            (Scenario::PredatorPrey, Turn::Follower) => PREY_MAX_SPEED,
            _ => DEFAULT_MAX_SPEED,
        }
    }

    /// Per-tick `(leader, follower)` reward of a post-tick state.
    pub fn tick_reward(self, s: &ParticleState) -> [f64; 2] {
        match self {
            Scenario::PredatorPrey => {
                let d = s.gap();
                let hit = if d < CONTACT_RADIUS {
                    CONTACT_REWARD
                } else {
                    0.0
                };
                let wall: f64 = s
                    .follower
                    .pos
                    .iter()
                    .map(|x| (x.abs() - 0.9).max(0.0) * 10.0)
                    .sum();
                [-d + hit, d - hit - wall]
            }
            Scenario::KeepAway => {
                let d = distance(s.leader.pos, s.landmark.unwrap_or_default());
                [-d, d]
            }
        }
    }
}

fn integrate(b: &mut Body, force: [f64; 2], max_speed: f64) {
    for k in 0..2 {
        b.vel[k] = b.vel[k] * (1.0 - DAMPING * DT_ENV) + force[k] / MASS * DT_ENV;
    }
    let speed = b.vel[0].hypot(b.vel[1]);
    if speed > max_speed {
        let f = max_speed / speed;
        b.vel = [b.vel[0] * f, b.vel[1] * f];
    }
    for k in 0..2 {
        b.pos[k] += b.vel[k] * DT_ENV;
        clamp_axis(b, k);
    }
}

fn clamp_axis(b: &mut Body, k: usize) {
    if b.pos[k] > ARENA {
        b.pos[k] = ARENA;
        b.vel[k] = b.vel[k].min(0.0);
    } else if b.pos[k] < -ARENA {
        b.pos[k] = -ARENA;
        b.vel[k] = b.vel[k].max(0.0);
    }
}

/// Pushes overlapping agents apart along their separation line.
fn separate(s: &mut ParticleState) {
    let d = s.gap();
    if d >= CONTACT_RADIUS {
        return;
    }
    let (ux, uy) = if d > 1e-12 {
        (
            (s.follower.pos[0] - s.leader.pos[0]) / d,
            (s.follower.pos[1] - s.leader.pos[1]) / d,
        )
    } else {
        (1.0, 0.0)
    };
    let push = 0.5 * (CONTACT_RADIUS - d);
    s.leader.pos[0] -= ux * push;
    s.leader.pos[1] -= uy * push;
    s.follower.pos[0] += ux * push;
    s.follower.pos[1] += uy * push;
    for b in [&mut s.leader, &mut s.follower] {
        clamp_axis(b, 0);
        clamp_axis(b, 1);
    }
}

/// One physics tick with only `turn` applying force (the idle agent gets No-op).
pub fn tick(
    state: &ParticleState,
    action: ParticleAction,
    turn: Turn,
    scenario: Scenario,
) -> Result<ParticleState, GameError> {
    let mut next = *state;
    let (lf, ff) = match turn {
        Turn::Leader => (action.force(), [0.0, 0.0]),
        Turn::Follower => ([0.0, 0.0], action.force()),
    };
    integrate(&mut next.leader, lf, scenario.max_speed(Turn::Leader));
    integrate(&mut next.follower, ff, scenario.max_speed(Turn::Follower));
    if scenario == Scenario::KeepAway {
        separate(&mut next);
    }
    if next.to_vec().iter().any(|x| !x.is_finite()) {
        return Err(GameError::Fault(format!(
            "non-finite particle state after {turn} tick"
        )));
    }
    Ok(next)
}

/// Advances one tick. At a follower step the reported pair sums the rewards
/// of the round's two ticks; leader steps report `(0, 0)`.
pub fn particle_step(
    state: &ParticleState,
    action: ParticleAction,
    turn: Turn,
    scenario: Scenario,
) -> Result<(ParticleState, [f64; 2]), GameError> {
    let next = tick(state, action, turn, scenario)?;
    let reward = match turn {
        Turn::Leader => [0.0, 0.0],
        Turn::Follower => {
            let a = scenario.tick_reward(state);
            let b = scenario.tick_reward(&next);
            [a[0] + b[0], a[1] + b[1]]
        }
    };
    Ok((next, reward))
}
