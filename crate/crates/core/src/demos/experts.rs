use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::games::{distance, GameError, ParticleAction, ParticleState, Policy, Scenario, ARENA};
use crate::Turn;

/// Nominal displacement used to score evader moves.
const PROBE: f64 = 0.1;
/// Evaders avoid ending a probe step this close to a wall.
const WALL_MARGIN: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpertRole {
    Chaser,
    Evader,
    GoalSeeker,
    Blocker,
}

/// Axis-wise step toward `target`, largest gap first.
pub fn chase(from: [f64; 2], target: [f64; 2]) -> ParticleAction {
    let (dx, dy) = (target[0] - from[0], target[1] - from[1]);
    if dx == 0.0 && dy == 0.0 {
        ParticleAction::Noop
    } else if dx.abs() >= dy.abs() {
        if dx > 0.0 {
            ParticleAction::Right
        } else {
            ParticleAction::Left
        }
    } else if dy > 0.0 {
        ParticleAction::Up
    } else {
        ParticleAction::Down
    }
}

fn direction(a: ParticleAction) -> [f64; 2] {
    match a {
        ParticleAction::Noop => [0.0, 0.0],
        ParticleAction::Up => [0.0, 1.0],
        ParticleAction::Down => [0.0, -1.0],
        ParticleAction::Left => [-1.0, 0.0],
        ParticleAction::Right => [1.0, 0.0],
    }
}

/// Whether a probe step `a` from `pos` heads into the wall margin.
pub fn hits_wall(pos: [f64; 2], a: ParticleAction) -> bool {
    let d = direction(a);
    (0..2).any(|k| d[k] != 0.0 && (pos[k] + PROBE * d[k]) * d[k] > ARENA - WALL_MARGIN)
}

/// Best of the four moves by probe distance from `threat`, never heading
/// into the wall margin. Ties prefer the axis with the larger gap, then x.
pub fn evade(pos: [f64; 2], threat: [f64; 2]) -> ParticleAction {
    let gap = [(pos[0] - threat[0]).abs(), (pos[1] - threat[1]).abs()];
    let moves = [
        ParticleAction::Up,
        ParticleAction::Down,
        ParticleAction::Left,
        ParticleAction::Right,
    ];
    let score = |a: ParticleAction| {
        let d = direction(a);
        distance([pos[0] + PROBE * d[0], pos[1] + PROBE * d[1]], threat)
    };
    let safe: Vec<ParticleAction> = moves
        .iter()
        .copied()
        .filter(|&a| !hits_wall(pos, a))
        .collect();
    let pool = if safe.is_empty() {
        moves.to_vec()
    } else {
        safe
    };
    let axis_rank = |a: ParticleAction| {
        let on_x = direction(a)[0] != 0.0;
        let major = if gap[0] >= gap[1] { on_x } else { !on_x };
        (major, on_x)
    };
    let mut best = pool[0];
    for &a in &pool[1..] {
        let (sa, sb) = (score(a), score(best));
        if sa > sb + 1e-12 || ((sa - sb).abs() <= 1e-12 && axis_rank(a) > axis_rank(best)) {
            best = a;
        }
    }
    best
}

/// A scripted particle demonstrator sitting in `seat`.
#[derive(Clone, Copy, Debug)]
pub struct ScriptedExpert {
    pub role: ExpertRole,
    pub scenario: Scenario,
}

impl ScriptedExpert {
    pub fn decide(&self, s: &ParticleState, turn: Turn) -> ParticleAction {
        let me = s.body(turn).pos;
        let other = s.body(turn.other()).pos;
        let landmark = s.landmark.unwrap_or_default();
        match self.role {
            ExpertRole::Chaser => chase(me, other),
            ExpertRole::Evader => evade(me, other),
            ExpertRole::GoalSeeker => chase(me, landmark),
            ExpertRole::Blocker => chase(
                me,
                [
                    (other[0] + landmark[0]) / 2.0,
                    (other[1] + landmark[1]) / 2.0,
                ],
            ),
        }
    }
}

impl Policy for ScriptedExpert {
    fn act(
        &self,
        state: &[f64],
        turn: Turn,
        step: usize,
        _: &mut dyn RngCore,
    ) -> Result<usize, GameError> {
        let s = ParticleState::from_vec(state, self.scenario).map_err(|e| GameError::Policy {
            step,
            message: e.to_string(),
        })?;
        Ok(self.decide(&s, turn).id())
    }
}
