use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::games::{GameError, IpdAction, IpdState, Policy};
use crate::Turn;

/// Defects whenever the opponent last cooperated, and copies a defection.
/// First move cooperates.
pub fn tft_def(last: Option<IpdAction>) -> IpdAction {
    match last {
        None => IpdAction::C,
        Some(_) => IpdAction::D,
    }
}

/// After an opponent C: imitate (C) with probability 0.5, otherwise defect.
/// After D: D. First move cooperates.
pub fn tft_imp<R: Rng + ?Sized>(last: Option<IpdAction>, rng: &mut R) -> IpdAction {
    match last {
        None => IpdAction::C,
        Some(IpdAction::D) => IpdAction::D,
        Some(IpdAction::C) => {
            if rng.random_bool(0.5) {
                IpdAction::C
            } else {
                IpdAction::D
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TftVariant {
    Def,
    Imp,
}

/// A tit-for-tat player for either seat. It reads the opponent's slot of the
/// current state: a follower sees the leader's move of this round, a leader
/// sees the follower's move of the previous round.
#[derive(Clone, Copy, Debug)]
pub struct TftPolicy(pub TftVariant);

impl Policy for TftPolicy {
    fn act(
        &self,
        state: &[f64],
        turn: Turn,
        step: usize,
        mut rng: &mut dyn RngCore,
    ) -> Result<usize, GameError> {
        let s = match state {
            [x] => IpdState::from_id(*x as usize),
            _ => None,
        }
        .ok_or_else(|| GameError::Policy {
            step,
            message: format!("not an IPD state: {state:?}"),
        })?;
        let last = s.slot(turn.other());
        let a = match self.0 {
            TftVariant::Def => tft_def(last),
            TftVariant::Imp => tft_imp(last, &mut rng),
        };
        Ok(a.id())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    #[test]
    fn tft_def_rules() {
        assert_eq!(tft_def(Some(IpdAction::C)), IpdAction::D);
        assert_eq!(tft_def(Some(IpdAction::D)), IpdAction::D);
        assert_eq!(tft_def(None), IpdAction::C);
    }

    #[test]
    fn tft_imp_rules() {
        let mut rng = seeds::rng(0);
        assert_eq!(tft_imp(None, &mut rng), IpdAction::C);
        for _ in 0..1000 {
            assert_eq!(tft_imp(Some(IpdAction::D), &mut rng), IpdAction::D);
        }
    }

    #[test]
    fn tft_imp_frequency() {
        let mut rng = seeds::rng(1);
        let n = 100_000;
        let c = (0..n)
            .filter(|_| tft_imp(Some(IpdAction::C), &mut rng) == IpdAction::C)
            .count();
        let f = c as f64 / n as f64;
        assert!((0.49..=0.51).contains(&f), "{f}");
    }

    #[test]
    fn never_cooperates_after_defection() {
        let mut rng = seeds::rng(2);
        for s in IpdState::ALL {
            for turn in [Turn::Leader, Turn::Follower] {
                if s.slot(turn.other()) != Some(IpdAction::D) {
                    continue;
                }
                for v in [TftVariant::Def, TftVariant::Imp] {
                    for _ in 0..50 {
                        let a = TftPolicy(v)
                            .act(&[s.id() as f64], turn, 1, &mut rng)
                            .unwrap();
                        assert_eq!(a, IpdAction::D.id());
                    }
                }
            }
        }
    }
}
