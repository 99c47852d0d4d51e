use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::games::{ipd_step, GameError, IpdAction, IpdState, Policy, IPD_HORIZON};
use crate::Turn;

/// Tabular action values over the 5 IPD states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    pub values: [[f64; 2]; 5],
    pub lr: f64,
    pub discount: f64,
    pub eps_start: f64,
    pub eps_end: f64,
}

impl Default for QTable {
    fn default() -> Self {
        Self {
            values: [[0.0; 2]; 5],
            lr: 0.1,
            discount: 0.95,
            eps_start: 1.0,
            eps_end: 0.05,
        }
    }
}

impl QTable {
    pub fn q(&self, s: IpdState, a: IpdAction) -> f64 {
        self.values[s.id()][a.id()]
    }

    /// Argmax with ties going to C.
    pub fn greedy(&self, s: IpdState) -> IpdAction {
        let [c, d] = self.values[s.id()];
        if d > c {
            IpdAction::D
        } else {
            IpdAction::C
        }
    }

    /// Linear decay from `eps_start` to `eps_end` over `total` episodes.
    pub fn epsilon(&self, episode: usize, total: usize) -> f64 {
        if total <= 1 {
            return self.eps_end;
        }
        let f = episode as f64 / (total - 1) as f64;
        self.eps_start + (self.eps_end - self.eps_start) * f
    }
}

/// Greedy play from a fixed table.
#[derive(Clone, Debug)]
pub struct QPolicy(pub QTable);

impl Policy for QPolicy {
    fn act(
        &self,
        state: &[f64],
        _: Turn,
        step: usize,
        _: &mut dyn RngCore,
    ) -> Result<usize, GameError> {
        let s = match state {
            [x] => IpdState::from_id(*x as usize),
            _ => None,
        }
        .ok_or_else(|| GameError::Policy {
            step,
            message: format!("not an IPD state: {state:?}"),
        })?;
        Ok(self.0.greedy(s).id())
    }
}

pub struct QTraining {
    pub table: QTable,
    /// Learner's undiscounted return per training episode.
    pub returns: Vec<f64>,
}

impl QTraining {
    /// Whether the 100-episode moving average over the last quarter never
    /// drops below its value at the start of that quarter.
    pub fn final_quarter_non_decreasing(&self) -> bool {
        let n = self.returns.len();
        if n < 400 {
            return true;
        }
        let avg: Vec<f64> = self
            .returns
            .windows(100)
            .map(|w| w.iter().sum::<f64>() / 100.0)
            .collect();
        let q = avg.len() - (n / 4).min(avg.len());
        avg[q..].iter().all(|&v| v >= avg[q] - 1e-9)
    }
}

/// Q-learning for the agent in `seat` against a fixed opponent. Each
/// learner transition spans its own move and the opponent's reply. Episodes
/// start from a uniformly random state so every table row gets visited, and
/// the round cap is not treated as terminal (the state carries no clock).
pub fn train_q_demonstrator<R: Rng>(
    seat: Turn,
    opponent: &dyn Policy,
    episodes: usize,
    init: QTable,
    rng: &mut R,
) -> Result<QTraining, GameError> {
    let mut table = init;
    let mut returns = Vec::with_capacity(episodes);
    let rounds = IPD_HORIZON / 2;
    for ep in 0..episodes {
        let eps = table.epsilon(ep, episodes);
        let mut s = IpdState::ALL[rng.random_range(0..5)];
        if seat == Turn::Follower && s == IpdState::Start {
            s = IpdState::ALL[rng.random_range(1..5)];
        }
        let mut total = 0.0;
        for round in 0..rounds {
            let a = if rng.random_bool(eps) {
                IpdAction::ALL[rng.random_range(0..2)]
            } else {
                table.greedy(s)
            };
            let (mid, r1) = ipd_step(s, a, seat);
            let step = 2 * round + 1;
            let reply =
                IpdAction::from_id(opponent.act(&[mid.id() as f64], seat.other(), step, rng)?)
                    .ok_or(GameError::IllegalAction {
                        actor: seat.other(),
                        step,
                        action: usize::MAX,
                    })?;
            let (next, r2) = ipd_step(mid, reply, seat.other());
            let r = r1[seat.index()] + r2[seat.index()];
            total += r;
            let target = r + table.discount
                * table.values[next.id()]
                    .iter()
                    .copied()
                    .fold(f64::NEG_INFINITY, f64::max);
            let q = &mut table.values[s.id()][a.id()];
            *q += table.lr * (target - *q);
            s = next;
        }
        returns.push(total);
    }
    Ok(QTraining { table, returns })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::ConstantPolicy;
    use crate::seeds;

    // Infinite-horizon Q iteration on the learner's 5-state MDP against a
    // deterministic opponent.
    fn exact_greedy(seat: Turn, opp: IpdAction) -> Vec<IpdAction> {
        let mut q = [[0.0f64; 2]; 5];
        for _ in 0..2000 {
            let mut nq = q;
            for s in IpdState::ALL {
                for a in IpdAction::ALL {
                    let (mid, r1) = ipd_step(s, a, seat);
                    let (next, r2) = ipd_step(mid, opp, seat.other());
                    let v = q[next.id()][0].max(q[next.id()][1]);
                    nq[s.id()][a.id()] = r1[seat.index()] + r2[seat.index()] + 0.95 * v;
                }
            }
            q = nq;
        }
        IpdState::ALL
            .iter()
            .map(|s| {
                if q[s.id()][1] > q[s.id()][0] {
                    IpdAction::D
                } else {
                    IpdAction::C
                }
            })
            .collect()
    }

    #[test]
    fn learns_to_defect_against_constant_opponents() {
        for opp in IpdAction::ALL {
            let oracle = exact_greedy(Turn::Leader, opp);
            assert!(oracle.iter().all(|&a| a == IpdAction::D));
            let out = train_q_demonstrator(
                Turn::Leader,
                &ConstantPolicy(opp.id()),
                3000,
                QTable::default(),
                &mut seeds::rng(3),
            )
            .unwrap();
            let learned: Vec<IpdAction> =
                IpdState::ALL.iter().map(|&s| out.table.greedy(s)).collect();
            assert_eq!(learned, oracle, "vs {opp:?}: {:?}", out.table.values);
        }
    }

    #[test]
    fn zero_episodes_leave_table_untouched() {
        let out = train_q_demonstrator(
            Turn::Leader,
            &ConstantPolicy(0),
            0,
            QTable::default(),
            &mut seeds::rng(0),
        )
        .unwrap();
        assert_eq!(out.table, QTable::default());
        assert!(out.returns.is_empty());
    }

    #[test]
    fn greedy_ties_go_to_cooperate() {
        assert_eq!(QTable::default().greedy(IpdState::DD), IpdAction::C);
    }

    #[test]
    fn epsilon_schedule_endpoints() {
        let t = QTable::default();
        assert_eq!(t.epsilon(0, 100), 1.0);
        assert!((t.epsilon(99, 100) - 0.05).abs() < 1e-12);
    }
}
