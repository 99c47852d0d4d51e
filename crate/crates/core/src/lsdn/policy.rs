use rand::{Rng, RngCore};

use super::{LsdnError, ModelBundle};
use crate::games::{GameError, Policy};
use crate::gradcore::{Graph, Scalar, Tensor};
use crate::sdekit::{BrownianPath, Sde};
use crate::Turn;

/// Argmax (ties to the lowest index) or a draw from `p`.
pub(crate) fn choose(p: &[f64], greedy: bool, rng: &mut dyn RngCore) -> usize {
    if greedy {
        let mut best = 0;
        for (i, &v) in p.iter().enumerate() {
            if v > p[best] {
                best = i;
            }
        }
        return best;
    }
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &v) in p.iter().enumerate() {
        acc += v;
        if u < acc {
            return i;
        }
    }
    p.len() - 1
}

/// Plays both seats: re-anchors the latent at the observed state, advances
/// the prior SDE over one decision interval, decodes the predicted next
/// state and asks the inverse dynamics which action leads there.
pub struct LsdnPolicy<S> {
    pub model: ModelBundle<S>,
    /// Decisions per episode the model was trained on.
    pub horizon: usize,
}

impl<S: Scalar> LsdnPolicy<S> {
    pub fn new(model: ModelBundle<S>) -> Self {
        let horizon = model.env.horizon();
        Self { model, horizon }
    }

    /// Predicted next-state features after `step` from `features`.
    pub fn imagine(
        &self,
        features: &[f64],
        step: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<f64>, LsdnError> {
        if step >= self.horizon {
            return Err(LsdnError::Argument(format!(
                "step {step} beyond horizon {}",
                self.horizon
            )));
        }
        let m = &self.model;
        let (grid, schedule, stamps) = m.timeline(self.horizon)?;
        let z = m.anchor_latent(features)?;
        let d = z.len();
        let steps = stamps[step]..stamps[step + 1];
        let path = BrownianPath::sample(steps.len(), grid.dt(), 1, d, rng);
        let mut g = Graph::new(&m.store);
        let z0 = g.constant(Tensor::row(z));
        let sde = Sde {
            drift: &m.prior,
            diffusion: &m.diffusion,
            reference: None,
        };
        let out = crate::sdekit::euler_maruyama(&mut g, &sde, z0, &grid, &schedule, &path, steps)?;
        let end = *out.states.last().expect("non-empty path");
        let mean = m.decode(&mut g, end)?;
        Ok(g.value(mean).values().iter().map(|v| v.as_f64()).collect())
    }

    pub fn action_distribution(
        &self,
        state: &[f64],
        turn: Turn,
        step: usize,
        rng: &mut dyn RngCore,
    ) -> Result<Vec<f64>, LsdnError> {
        let features = self.model.env.features(state)?;
        let next = self.imagine(&features, step, rng)?;
        self.model.predict_action(&features, &next, turn)
    }
}

impl<S: Scalar> Policy for LsdnPolicy<S> {
    fn act(
        &self,
        state: &[f64],
        turn: Turn,
        step: usize,
        rng: &mut dyn RngCore,
    ) -> Result<usize, GameError> {
        let p = self
            .action_distribution(state, turn, step, rng)
            .map_err(|e| GameError::Policy {
                step,
                message: e.to_string(),
            })?;
        Ok(choose(&p, self.model.config.greedy, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{EnvId, IpdState};
    use crate::lsdn::ModelConfig;
    use crate::seeds;

    #[test]
    fn choose_respects_distribution() {
        let mut rng = seeds::rng(4);
        assert_eq!(choose(&[0.2, 0.5, 0.3], true, &mut rng), 1);
        assert_eq!(choose(&[0.5, 0.5], true, &mut rng), 0);
        let n = 20_000;
        let hits = (0..n)
            .filter(|_| choose(&[0.25, 0.75], false, &mut rng) == 1)
            .count();
        assert!((hits as f64 / n as f64 - 0.75).abs() < 0.015);
    }

    #[test]
    fn greedy_floor_policy_is_deterministic() {
        let cfg = ModelConfig {
            greedy: true,
            ..ModelConfig::ipd()
        };
        let mut model = ModelBundle::<f64>::new(EnvId::Ipd, cfg).unwrap();
        // Diffusion pinned to its floor.
        let last = *model.diffusion.net.layers.last().map(|l| &l.bias).unwrap();
        model.store.get_mut(last).values_mut().fill(-50.0);
        let policy = LsdnPolicy::new(model);
        let s = [IpdState::CD.id() as f64];
        let first: Vec<usize> = (0..5)
            .map(|k| {
                policy
                    .act(&s, Turn::of_step(k), k, &mut seeds::rng(k as u64))
                    .unwrap()
            })
            .collect();
        for _ in 0..3 {
            let again: Vec<usize> = (0..5)
                .map(|k| {
                    policy
                        .act(&s, Turn::of_step(k), k, &mut seeds::rng(k as u64))
                        .unwrap()
                })
                .collect();
            assert_eq!(again, first);
        }
    }

    #[test]
    fn probabilities_are_normalized() {
        let policy =
            LsdnPolicy::new(ModelBundle::<f64>::new(EnvId::Ipd, ModelConfig::ipd()).unwrap());
        let mut rng = seeds::rng(0);
        for s in IpdState::ALL {
            let p = policy
                .action_distribution(&[s.id() as f64], Turn::Leader, 0, &mut rng)
                .unwrap();
            assert!(p.iter().all(|&x| x >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!(policy
            .action_distribution(&[0.0], Turn::Leader, 20, &mut rng)
            .is_err());
    }
}
