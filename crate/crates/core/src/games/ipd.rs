use serde::{Deserialize, Serialize};

use super::GameError;
use crate::Turn;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IpdAction {
    C,
    D,
}

impl IpdAction {
    pub const ALL: [IpdAction; 2] = [IpdAction::C, IpdAction::D];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }
}

/// Memory of the latest (leader, follower) action pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IpdState {
    Start,
    CC,
    CD,
    DC,
    DD,
}

impl IpdState {
    pub const ALL: [IpdState; 5] = [
        IpdState::Start,
        IpdState::CC,
        IpdState::CD,
        IpdState::DC,
        IpdState::DD,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn from_pair(leader: IpdAction, follower: IpdAction) -> Self {
        match (leader, follower) {
            (IpdAction::C, IpdAction::C) => IpdState::CC,
            (IpdAction::C, IpdAction::D) => IpdState::CD,
            (IpdAction::D, IpdAction::C) => IpdState::DC,
            (IpdAction::D, IpdAction::D) => IpdState::DD,
        }
    }

    /// The remembered `(leader, follower)` pair; `None` at `Start`.
    pub fn pair(self) -> Option<(IpdAction, IpdAction)> {
        match self {
            IpdState::Start => None,
            IpdState::CC => Some((IpdAction::C, IpdAction::C)),
            IpdState::CD => Some((IpdAction::C, IpdAction::D)),
            IpdState::DC => Some((IpdAction::D, IpdAction::C)),
            IpdState::DD => Some((IpdAction::D, IpdAction::D)),
        }
    }

    /// Last action of `agent`, if it has moved yet.
    pub fn slot(self, agent: Turn) -> Option<IpdAction> {
        self.pair()
            .map(|(l, f)| if agent == Turn::Leader { l } else { f })
    }

    pub fn one_hot(self) -> [f64; 5] {
        let mut v = [0.0; 5];
        v[self.id()] = 1.0;
        v
    }
}

/// Round payoff `(leader, follower)`.
pub fn ipd_payoff(leader: IpdAction, follower: IpdAction) -> (f64, f64) {
    match (leader, follower) {
        (IpdAction::C, IpdAction::C) => (3.0, 3.0),
        (IpdAction::C, IpdAction::D) => (0.0, 5.0),
        (IpdAction::D, IpdAction::C) => (5.0, 0.0),
        (IpdAction::D, IpdAction::D) => (1.0, 1.0),
    }
}

/// Overwrites the actor's slot. An unset slot at `Start` carries over as C,
/// so `(Start, leader D)` becomes `DC`. The payoff lands after the follower's
/// reply; leader moves pay `(0, 0)`.
pub fn ipd_step(state: IpdState, action: IpdAction, turn: Turn) -> (IpdState, [f64; 2]) {
    let (l, f) = state.pair().unwrap_or((IpdAction::C, IpdAction::C));
    match turn {
        Turn::Leader => (IpdState::from_pair(action, f), [0.0, 0.0]),
        Turn::Follower => {
            let (rl, rf) = ipd_payoff(l, action);
            (IpdState::from_pair(l, action), [rl, rf])
        }
    }
}

pub(crate) fn parse_state(v: &[f64]) -> Result<IpdState, GameError> {
    match v {
        [x] if x.fract() == 0.0 && *x >= 0.0 => IpdState::from_id(*x as usize)
            .ok_or_else(|| GameError::Parse(format!("IPD state id {x} out of range"))),
        _ => Err(GameError::Parse(format!(
            "IPD state must be a single integer id, got {v:?}"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payoff_table() {
        assert_eq!(ipd_payoff(IpdAction::C, IpdAction::C), (3.0, 3.0));
        assert_eq!(ipd_payoff(IpdAction::D, IpdAction::C), (5.0, 0.0));
        assert_eq!(ipd_payoff(IpdAction::C, IpdAction::D), (0.0, 5.0));
        assert_eq!(ipd_payoff(IpdAction::D, IpdAction::D), (1.0, 1.0));
    }

    #[test]
    fn leader_then_follower_round() {
        let (s, r) = ipd_step(IpdState::Start, IpdAction::D, Turn::Leader);
        assert_eq!((s, r), (IpdState::DC, [0.0, 0.0]));
        assert_eq!(s.slot(Turn::Leader), Some(IpdAction::D));
        let (s, r) = ipd_step(s, IpdAction::C, Turn::Follower);
        assert_eq!((s, r), (IpdState::DC, [5.0, 0.0]));
    }

    #[test]
    fn action_recoverable_from_transition() {
        for s in IpdState::ALL {
            for turn in [Turn::Leader, Turn::Follower] {
                let (a, _) = ipd_step(s, IpdAction::C, turn);
                let (b, _) = ipd_step(s, IpdAction::D, turn);
                assert_ne!(a, b, "{s:?} {turn}");
            }
        }
    }

    #[test]
    fn ids_roundtrip() {
        for s in IpdState::ALL {
            assert_eq!(parse_state(&[s.id() as f64]).unwrap(), s);
        }
        assert!(parse_state(&[5.0]).is_err());
        assert!(parse_state(&[1.5]).is_err());
    }
}
