use std::collections::BTreeMap;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::games::{ipd, ipd_step, EnvId, GameError, IpdAction, IpdState, Policy, Trajectory};
use crate::Turn;

/// Discount used for occupancy diagnostics.
pub const DEFAULT_GAMMA: f64 = 0.99;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OccupancyKey {
    pub actor: Turn,
    pub state: usize,
    pub action: usize,
    pub next: usize,
}

/// Discounted visitation mass over `(actor, s, a, s')`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccupancyTable {
    pub env: EnvId,
    pub gamma: f64,
    pub horizon: usize,
    pub mass: BTreeMap<OccupancyKey, f64>,
}

impl OccupancyTable {
    pub fn total_mass(&self) -> f64 {
        self.mass.values().sum()
    }

    /// `sum_{t < H} gamma^t`.
    pub fn closed_form_mass(gamma: f64, horizon: usize) -> f64 {
        if gamma == 1.0 {
            horizon as f64
        } else {
            (1.0 - gamma.powi(horizon as i32)) / (1.0 - gamma)
        }
    }

    pub fn normalized(&self) -> BTreeMap<OccupancyKey, f64> {
        let z = self.total_mass();
        self.mass.iter().map(|(k, v)| (*k, v / z)).collect()
    }
}

/// Action probabilities per IPD state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IpdPolicyTable {
    /// `probs[state][action]`.
    pub probs: [[f64; 2]; 5],
}

impl IpdPolicyTable {
    pub fn constant(action: IpdAction) -> Self {
        let mut row = [0.0; 2];
        row[action.id()] = 1.0;
        Self { probs: [row; 5] }
    }

    pub fn deterministic(f: impl Fn(IpdState) -> IpdAction) -> Self {
        let mut probs = [[0.0; 2]; 5];
        for s in IpdState::ALL {
            probs[s.id()][f(s).id()] = 1.0;
        }
        Self { probs }
    }

    /// Defection probability per state drawn uniformly.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Self {
        let mut probs = [[0.0; 2]; 5];
        for row in &mut probs {
            let d: f64 = rng.random();
            *row = [1.0 - d, d];
        }
        Self { probs }
    }

    fn validate(&self) -> Result<(), EvalError> {
        for row in &self.probs {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p))
                || (row[0] + row[1] - 1.0).abs() > 1e-12
            {
                return Err(EvalError::Argument(format!(
                    "policy row {row:?} is not a distribution"
                )));
            }
        }
        Ok(())
    }
}

impl Policy for IpdPolicyTable {
    fn act(
        &self,
        state: &[f64],
        _: Turn,
        step: usize,
        rng: &mut dyn RngCore,
    ) -> Result<usize, GameError> {
        let s = ipd::parse_state(state).map_err(|e| GameError::Policy {
            step,
            message: e.to_string(),
        })?;
        Ok(usize::from(rng.random::<f64>() >= self.probs[s.id()][0]))
    }
}

fn require_tabular(env: EnvId) -> Result<(), EvalError> {
    if env.is_tabular() {
        Ok(())
    } else {
        Err(EvalError::Unsupported(format!(
            "occupancy tables need a tabular game, got {env}"
        )))
    }
}

/// Exact forward enumeration of the finite-horizon discounted occupancy.
pub fn occupancy_measure(
    env: EnvId,
    leader: &IpdPolicyTable,
    follower: &IpdPolicyTable,
    gamma: f64,
    horizon: usize,
) -> Result<OccupancyTable, EvalError> {
    require_tabular(env)?;
    leader.validate()?;
    follower.validate()?;
    let mut dist = [0.0; 5];
    dist[IpdState::Start.id()] = 1.0;
    let mut mass = BTreeMap::new();
    let mut weight = 1.0;
    for t in 0..horizon {
        let turn = Turn::of_step(t);
        let policy = if turn == Turn::Leader {
            leader
        } else {
            follower
        };
        let mut next_dist = [0.0; 5];
        for s in IpdState::ALL {
            let p_s = dist[s.id()];
            if p_s == 0.0 {
                continue;
            }
            if turn == Turn::Follower && s == IpdState::Start {
                return Err(EvalError::Argument(
                    "follower to move from the start state".into(),
                ));
            }
            for a in IpdAction::ALL {
                let p = p_s * policy.probs[s.id()][a.id()];
                if p == 0.0 {
                    continue;
                }
                let (next, _) = ipd_step(s, a, turn);
                *mass
                    .entry(OccupancyKey {
                        actor: turn,
                        state: s.id(),
                        action: a.id(),
                        next: next.id(),
                    })
                    .or_insert(0.0) += weight * p;
                next_dist[next.id()] += p;
            }
        }
        dist = next_dist;
        weight *= gamma;
    }
    Ok(OccupancyTable {
        env,
        gamma,
        horizon,
        mass,
    })
}

/// Episode-averaged discounted visitation counts of recorded transitions.
pub fn empirical_occupancy(
    trajectories: &[Trajectory],
    gamma: f64,
) -> Result<OccupancyTable, EvalError> {
    let first = trajectories
        .first()
        .ok_or_else(|| EvalError::Argument("no trajectories".into()))?;
    require_tabular(first.env)?;
    let mut mass = BTreeMap::new();
    for t in trajectories {
        if t.env != first.env {
            return Err(EvalError::Argument(format!(
                "mixed environments: {} and {}",
                first.env, t.env
            )));
        }
        let mut w = 1.0;
        for r in &t.records {
            let key = OccupancyKey {
                actor: r.actor,
                state: ipd::parse_state(&r.state)?.id(),
                action: r.action,
                next: ipd::parse_state(&r.next_state)?.id(),
            };
            *mass.entry(key).or_insert(0.0) += w;
            w *= gamma;
        }
    }
    let n = trajectories.len() as f64;
    mass.values_mut().for_each(|v| *v /= n);
    let horizon = trajectories.iter().map(Trajectory::len).max().unwrap_or(0);
    Ok(OccupancyTable {
        env: first.env,
        gamma,
        horizon,
        mass,
    })
}

/// Half the L1 distance between the mass-normalized tables.
pub fn tv_distance(a: &OccupancyTable, b: &OccupancyTable) -> Result<f64, EvalError> {
    if a.env != b.env {
        return Err(EvalError::Argument(format!(
            "tables for {} and {}",
            a.env, b.env
        )));
    }
    if !(a.total_mass() > 0.0 && b.total_mass() > 0.0) {
        return Err(EvalError::Argument("empty occupancy table".into()));
    }
    let (p, q) = (a.normalized(), b.normalized());
    let mut sum = 0.0;
    for (k, v) in &p {
        sum += (v - q.get(k).copied().unwrap_or(0.0)).abs();
    }
    for (k, v) in &q {
        if !p.contains_key(k) {
            sum += v.abs();
        }
    }
    Ok(0.5 * sum)
}

/// Reward per `(actor, s, a, s')` transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RewardTable {
    pub rewards: BTreeMap<OccupancyKey, f64>,
}

impl RewardTable {
    /// IPD reward of every legal transition combined by `f(leader, follower)`.
    pub fn ipd(f: impl Fn(f64, f64) -> f64) -> Self {
        let mut rewards = BTreeMap::new();
        for turn in [Turn::Leader, Turn::Follower] {
            for s in IpdState::ALL {
                if turn == Turn::Follower && s == IpdState::Start {
                    continue;
                }
                for a in IpdAction::ALL {
                    let (next, r) = ipd_step(s, a, turn);
                    rewards.insert(
                        OccupancyKey {
                            actor: turn,
                            state: s.id(),
                            action: a.id(),
                            next: next.id(),
                        },
                        f(r[0], r[1]),
                    );
                }
            }
        }
        Self { rewards }
    }

    /// Sum of both agents' payoffs.
    pub fn ipd_joint() -> Self {
        Self::ipd(|l, f| l + f)
    }

    pub fn r_max(&self) -> f64 {
        self.rewards.values().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// `sum rho(k) r(k)`; transitions without a reward entry count zero.
pub fn expected_return(table: &OccupancyTable, reward: &RewardTable) -> f64 {
    table
        .mass
        .iter()
        .map(|(k, m)| m * reward.rewards.get(k).copied().unwrap_or(0.0))
        .sum()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// `|J(expert) - J(policy)|` against `R_max / (1 - gamma) * TV(rho, rho*)`.
pub fn check_suboptimality_bound(
    env: EnvId,
    policy: (&IpdPolicyTable, &IpdPolicyTable),
    expert: (&IpdPolicyTable, &IpdPolicyTable),
    gamma: f64,
    reward: &RewardTable,
    horizon: usize,
) -> Result<BoundCheck, EvalError> {
    if gamma >= 1.0 || !(gamma >= 0.0) {
        return Err(EvalError::Unsupported(format!(
            "bound undefined for gamma = {gamma}"
        )));
    }
    let rho = occupancy_measure(env, policy.0, policy.1, gamma, horizon)?;
    let rho_star = occupancy_measure(env, expert.0, expert.1, gamma, horizon)?;
    let lhs = (expected_return(&rho_star, reward) - expected_return(&rho, reward)).abs();
    let rhs = reward.r_max() / (1.0 - gamma) * tv_distance(&rho, &rho_star)?;
    Ok(BoundCheck {
        lhs,
        rhs,
        holds: lhs <= rhs + 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos::{tft_def, TftPolicy, TftVariant};
    use crate::games::run_episode;
    use crate::seeds;
    use proptest::prelude::*;

    fn table(entries: &[(usize, f64)]) -> OccupancyTable {
        let mass = entries
            .iter()
            .map(|&(i, m)| {
                (
                    OccupancyKey {
                        actor: Turn::Leader,
                        state: i,
                        action: 0,
                        next: i,
                    },
                    m,
                )
            })
            .collect();
        OccupancyTable {
            env: EnvId::Ipd,
            gamma: 0.9,
            horizon: 1,
            mass,
        }
    }

    #[test]
    fn total_mass_closed_form() {
        let l = IpdPolicyTable::constant(IpdAction::C);
        let occ = occupancy_measure(EnvId::Ipd, &l, &l, 0.99, 20).unwrap();
        assert!((occ.total_mass() - 18.209_306_240_276_923).abs() < 1e-12);
        assert_eq!(occ.mass.len(), 3);
    }

    #[test]
    fn deterministic_policies_follow_one_path() {
        let l = IpdPolicyTable::constant(IpdAction::D);
        let f = IpdPolicyTable::constant(IpdAction::C);
        let occ = occupancy_measure(EnvId::Ipd, &l, &f, 0.5, 4).unwrap();
        let keys: Vec<_> = occ
            .mass
            .iter()
            .map(|(k, v)| (k.actor, k.state, k.next, *v))
            .collect();
        assert_eq!(
            keys,
            vec![
                (Turn::Leader, 0, 3, 1.0),
                (Turn::Leader, 3, 3, 0.25),
                (Turn::Follower, 3, 3, 0.5 + 0.125)
            ]
        );
        assert!(occupancy_measure(EnvId::Predatorprey, &l, &f, 0.5, 4).is_err());
    }

    #[test]
    fn tv_examples() {
        let a = table(&[(0, 0.5), (1, 0.3), (2, 0.2)]);
        let b = table(&[(0, 0.2), (1, 0.3), (2, 0.5)]);
        assert!((tv_distance(&a, &b).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(
            tv_distance(&table(&[(0, 2.0)]), &table(&[(1, 5.0)])).unwrap(),
            1.0
        );
        let other = OccupancyTable {
            env: EnvId::Keepaway,
            ..a.clone()
        };
        assert!(tv_distance(&a, &other).is_err());
    }

    proptest! {
        #[test]
        fn tv_is_a_metric(xs in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 4), 3)) {
            let t: Vec<OccupancyTable> = xs.iter().map(|v| table(&v.iter().copied().enumerate().collect::<Vec<_>>())).collect();
            let d = |i: usize, j: usize| tv_distance(&t[i], &t[j]).unwrap();
            prop_assert!((d(0, 1) - d(1, 0)).abs() < 1e-15);
            prop_assert!(d(0, 2) <= d(0, 1) + d(1, 2) + 1e-12);
            prop_assert_eq!(d(0, 0), 0.0);
        }

        #[test]
        fn mass_matches_geometric_sum(gamma in 0.0f64..0.999, horizon in 1usize..40, seed in 0u64..1000) {
            let mut rng = seeds::rng(seed);
            let (l, f) = (IpdPolicyTable::random(&mut rng), IpdPolicyTable::random(&mut rng));
            let occ = occupancy_measure(EnvId::Ipd, &l, &f, gamma, horizon).unwrap();
            let closed = OccupancyTable::closed_form_mass(gamma, horizon);
            prop_assert!((occ.total_mass() - closed).abs() < 1e-12 * closed.max(1.0));
        }
    }

    #[test]
    fn stochastic_tables_match_monte_carlo() {
        let mut rng = seeds::rng(21);
        let (l, f) = (
            IpdPolicyTable::random(&mut rng),
            IpdPolicyTable::random(&mut rng),
        );
        let (gamma, horizon) = (0.9, 20);
        let exact = occupancy_measure(EnvId::Ipd, &l, &f, gamma, horizon).unwrap();
        let n = 100_000;
        let mut sum: BTreeMap<OccupancyKey, (f64, f64)> = BTreeMap::new();
        for i in 0..n {
            let t =
                run_episode(EnvId::Ipd, &l, &f, horizon, i, seeds::derive(77, i as u64)).unwrap();
            let single = empirical_occupancy(&[t], gamma).unwrap();
            for (k, v) in single.mass {
                let e = sum.entry(k).or_insert((0.0, 0.0));
                e.0 += v;
                e.1 += v * v;
            }
        }
        for (k, &m) in &exact.mass {
            let (s, s2) = sum.get(k).copied().unwrap_or((0.0, 0.0));
            let mean = s / n as f64;
            let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
            assert!(
                (mean - m).abs() <= 3.0 * se + 1e-12,
                "{k:?}: {mean} vs {m} (se {se})"
            );
        }
        assert!(sum.keys().all(|k| exact.mass.contains_key(k)));
    }

    #[test]
    fn bound_identities_and_tft_case() {
        let r = RewardTable::ipd_joint();
        assert_eq!(r.r_max(), 6.0);
        let c = IpdPolicyTable::constant(IpdAction::C);
        let d = IpdPolicyTable::constant(IpdAction::D);
        let same = check_suboptimality_bound(EnvId::Ipd, (&c, &d), (&c, &d), 0.95, &r, 20).unwrap();
        assert_eq!((same.lhs, same.rhs, same.holds), (0.0, 0.0, true));
        let tft = IpdPolicyTable::deterministic(|s| tft_def(s.slot(Turn::Leader)));
        let res =
            check_suboptimality_bound(EnvId::Ipd, (&c, &tft), (&d, &tft), 0.95, &r, 20).unwrap();
        assert!(res.holds && res.lhs > 0.0);
        assert!(
            check_suboptimality_bound(EnvId::Ipd, (&c, &tft), (&d, &tft), 1.0, &r, 20).is_err()
        );
        // The table policy and the TFT player agree on every state.
        let mut rng = seeds::rng(0);
        for s in &IpdState::ALL[1..] {
            let x = [s.id() as f64];
            assert_eq!(
                tft.act(&x, Turn::Follower, 1, &mut rng).unwrap(),
                TftPolicy(TftVariant::Def)
                    .act(&x, Turn::Follower, 1, &mut rng)
                    .unwrap()
            );
        }
    }
}
