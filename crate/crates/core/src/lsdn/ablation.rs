use rand::seq::SliceRandom;
use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::policy::choose;
use super::LsdnError;
use crate::games::{EnvId, GameError, Policy, Trajectory};
use crate::gradcore::{
    softmax, Activation, AdamState, Checkpoint, Graph, Mlp, ParamStore, Scalar, Tensor,
};
use crate::seeds;
use crate::Turn;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub hidden: usize,
    pub layers: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub greedy: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            layers: 2,
            epochs: 150,
            lr: 0.001,
            batch_size: 64,
            seed: 0,
            greedy: false,
        }
    }
}

/// One agent's next-own-state regressor and inverse dynamics.
#[derive(Clone, Debug)]
pub struct AgentAblation<S> {
    pub store: ParamStore<S>,
    /// `s_t -> s_{t+2}`.
    pub predictor: Mlp,
    /// `(s_t, s_{t+2}) -> a_t` logits.
    pub inverse: Mlp,
    /// Mean squared error and cross-entropy per epoch.
    pub losses: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct AblationModel<S> {
    pub env: EnvId,
    pub config: AblationConfig,
    pub agents: [AgentAblation<S>; 2],
}

/// `(s_t, s_{t+2}, a_t)` feature triples of the agent acting at `t`.
fn agent_pairs(
    env: EnvId,
    demos: &[Trajectory],
    turn: Turn,
) -> Result<Vec<(Vec<f64>, Vec<f64>, usize)>, LsdnError> {
    let mut out = Vec::new();
    for t in demos {
        if t.env != env {
            return Err(LsdnError::Argument(format!(
                "episode {} is {}, expected {env}",
                t.episode, t.env
            )));
        }
        let states = t.states();
        for (k, r) in t.records.iter().enumerate() {
            if r.actor == turn && k + 2 < states.len() {
                out.push((
                    env.features(states[k])?,
                    env.features(states[k + 2])?,
                    r.action,
                ));
            }
        }
    }
    Ok(out)
}

impl<S: Scalar> AgentAblation<S> {
    fn new(env: EnvId, config: &AblationConfig, turn: Turn) -> Self {
        let mut rng = seeds::rng(seeds::derive(config.seed, 0xAB1A + turn.index() as u64));
        let mut store = ParamStore::new();
        let f = env.feature_dim();
        let hidden = vec![config.hidden; config.layers];
        let predictor = Mlp::new(
            &mut store,
            "predictor",
            f,
            &hidden,
            f,
            Activation::Tanh,
            &mut rng,
        );
        let inverse = Mlp::new(
            &mut store,
            "inverse",
            2 * f,
            &hidden,
            env.num_actions(),
            Activation::Tanh,
            &mut rng,
        );
        Self {
            store,
            predictor,
            inverse,
            losses: Vec::new(),
        }
    }

    fn fit(
        &mut self,
        pairs: &[(Vec<f64>, Vec<f64>, usize)],
        config: &AblationConfig,
        rng: &mut dyn RngCore,
    ) -> Result<(), LsdnError> {
        if pairs.is_empty() {
            return Err(LsdnError::EmptyDataset);
        }
        let mut adam = AdamState::new(&self.store, S::lit(config.lr), S::one());
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        let lit = |v: &[f64]| v.iter().map(|&x| S::lit(x)).collect::<Vec<S>>();
        for epoch in 0..config.epochs {
            order.shuffle(rng);
            let (mut mse_sum, mut ce_sum) = (0.0, 0.0);
            for chunk in order.chunks(config.batch_size) {
                let s =
                    Tensor::from_rows(&chunk.iter().map(|&i| lit(&pairs[i].0)).collect::<Vec<_>>());
                let s2 =
                    Tensor::from_rows(&chunk.iter().map(|&i| lit(&pairs[i].1)).collect::<Vec<_>>());
                let pair = Tensor::from_rows(
                    &chunk
                        .iter()
                        .map(|&i| lit(&[pairs[i].0.clone(), pairs[i].1.clone()].concat()))
                        .collect::<Vec<_>>(),
                );
                let targets: Vec<usize> = chunk.iter().map(|&i| pairs[i].2).collect();
                let inv_b = S::lit(1.0 / chunk.len() as f64);
                let grads = {
                    let mut g = Graph::new(&self.store);
                    let x = g.constant(s);
                    let y = g.constant(s2);
                    let xy = g.constant(pair);
                    let pred = self.predictor.forward(&mut g, x)?;
                    let diff = g.sub(pred, y)?;
                    let sq = g.square(diff);
                    let sse = g.sum(sq);
                    let mse = g.scale(sse, inv_b);
                    let logits = self.inverse.forward(&mut g, xy)?;
                    let ce = g.cross_entropy(logits, &targets)?;
                    let ce = g.scale(ce, inv_b);
                    let loss = g.add(mse, ce)?;
                    let (m, c) = (g.item(mse).as_f64(), g.item(ce).as_f64());
                    if !(m.is_finite() && c.is_finite()) {
                        return Err(LsdnError::NonFinite {
                            iteration: epoch,
                            recon_nll: m,
                            kl: 0.0,
                            inverse_ce: c,
                        });
                    }
                    mse_sum += m * chunk.len() as f64;
                    ce_sum += c * chunk.len() as f64;
                    g.backward(loss)?
                };
                adam.step(&mut self.store, &grads)?;
            }
            let n = pairs.len() as f64;
            self.losses.push((mse_sum / n, ce_sum / n));
        }
        Ok(())
    }

    pub fn predict_next(&self, features: &[f64]) -> Result<Vec<f64>, LsdnError> {
        let x: Vec<S> = features.iter().map(|&v| S::lit(v)).collect();
        Ok(self
            .predictor
            .eval(&self.store, &x)?
            .iter()
            .map(|v| v.as_f64())
            .collect())
    }

    pub fn action_distribution(&self, features: &[f64]) -> Result<Vec<f64>, LsdnError> {
        let next = self.predict_next(features)?;
        let x: Vec<S> = features.iter().chain(&next).map(|&v| S::lit(v)).collect();
        Ok(softmax(&self.inverse.eval(&self.store, &x)?)
            .iter()
            .map(|p| p.as_f64())
            .collect())
    }
}

/// Fits both agents' regressors and inverse models on the demonstrations.
pub fn train_ablation<S: Scalar>(
    env: EnvId,
    config: AblationConfig,
    demos: &[Trajectory],
) -> Result<AblationModel<S>, LsdnError> {
    if demos.is_empty() {
        return Err(LsdnError::EmptyDataset);
    }
    let mut rng = seeds::rng(seeds::derive(config.seed, 0xAB1B));
    let mut agents = [
        AgentAblation::new(env, &config, Turn::Leader),
        AgentAblation::new(env, &config, Turn::Follower),
    ];
    for (turn, agent) in [Turn::Leader, Turn::Follower]
        .into_iter()
        .zip(agents.iter_mut())
    {
        let pairs = agent_pairs(env, demos, turn)?;
        agent.fit(&pairs, &config, &mut rng)?;
    }
    Ok(AblationModel {
        env,
        config,
        agents,
    })
}

impl<S: Scalar> AblationModel<S> {
    pub fn to_checkpoint(&self) -> Checkpoint<S> {
        let mut entries = Vec::new();
        for (turn, agent) in [Turn::Leader, Turn::Follower].into_iter().zip(&self.agents) {
            for (name, t) in agent.store.named_entries() {
                entries.push((format!("{turn}.{name}"), t));
            }
        }
        let losses: Vec<&Vec<(f64, f64)>> = self.agents.iter().map(|a| &a.losses).collect();
        Checkpoint::new(
            entries,
            serde_json::json!({ "env": self.env, "ablation": self.config, "losses": losses }),
        )
    }

    pub fn from_checkpoint(ckpt: &Checkpoint<S>) -> Result<Self, LsdnError> {
        let bad = |e: serde_json::Error| LsdnError::Config(format!("ablation checkpoint: {e}"));
        let env: EnvId = serde_json::from_value(ckpt.meta["env"].clone()).map_err(bad)?;
        let config: AblationConfig =
            serde_json::from_value(ckpt.meta["ablation"].clone()).map_err(bad)?;
        let losses: [Vec<(f64, f64)>; 2] =
            serde_json::from_value(ckpt.meta["losses"].clone()).map_err(bad)?;
        let mut agents = [
            AgentAblation::new(env, &config, Turn::Leader),
            AgentAblation::new(env, &config, Turn::Follower),
        ];
        for ((turn, agent), l) in [Turn::Leader, Turn::Follower]
            .into_iter()
            .zip(agents.iter_mut())
            .zip(losses)
        {
            let prefix = format!("{turn}.");
            let entries: Vec<(String, Tensor<S>)> = ckpt
                .entries
                .iter()
                .filter_map(|(n, t)| n.strip_prefix(&prefix).map(|n| (n.to_string(), t.clone())))
                .collect();
            agent.store.load_named(&entries)?;
            agent.losses = l;
        }
        Ok(Self {
            env,
            config,
            agents,
        })
    }
}

pub struct AblationPolicy<S>(pub AblationModel<S>);

impl<S: Scalar> Policy for AblationPolicy<S> {
    fn act(
        &self,
        state: &[f64],
        turn: Turn,
        step: usize,
        rng: &mut dyn RngCore,
    ) -> Result<usize, GameError> {
        let m = &self.0;
        let p = m
            .env
            .features(state)
            .map_err(LsdnError::from)
            .and_then(|f| m.agents[turn.index()].action_distribution(&f))
            .map_err(|e| GameError::Policy {
                step,
                message: e.to_string(),
            })?;
        Ok(choose(&p, m.config.greedy, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{run_episode, ConstantPolicy, IpdState};

    fn small() -> AblationConfig {
        AblationConfig {
            hidden: 16,
            epochs: 200,
            lr: 0.01,
            batch_size: 8,
            ..AblationConfig::default()
        }
    }

    #[test]
    fn constant_dataset_is_fit_exactly() {
        let demos: Vec<_> = (0..4)
            .map(|i| {
                run_episode(EnvId::Ipd, &ConstantPolicy(1), &ConstantPolicy(1), 20, i, 0).unwrap()
            })
            .collect();
        let m = train_ablation::<f64>(EnvId::Ipd, small(), &demos).unwrap();
        for agent in &m.agents {
            let (mse, _) = *agent.losses.last().unwrap();
            assert!(mse < 1e-4, "{mse}");
            let pred = agent.predict_next(&IpdState::DD.one_hot()).unwrap();
            assert!(
                pred.iter()
                    .zip(IpdState::DD.one_hot())
                    .all(|(a, b)| (a - b).abs() < 0.02),
                "{pred:?}"
            );
        }
    }

    #[test]
    fn legal_actions_everywhere_and_checkpoint_roundtrip() {
        let demos: Vec<_> = (0..4)
            .map(|i| {
                run_episode(
                    EnvId::Ipd,
                    &ConstantPolicy(i % 2),
                    &ConstantPolicy(1),
                    20,
                    i,
                    0,
                )
                .unwrap()
            })
            .collect();
        let m = train_ablation::<f64>(
            EnvId::Ipd,
            AblationConfig {
                epochs: 3,
                ..small()
            },
            &demos,
        )
        .unwrap();
        let back = AblationModel::<f64>::from_checkpoint(
            &Checkpoint::from_bytes(&m.to_checkpoint().to_bytes()).unwrap(),
        )
        .unwrap();
        let policy = AblationPolicy(back);
        let mut rng = seeds::rng(1);
        for s in IpdState::ALL {
            for turn in [Turn::Leader, Turn::Follower] {
                let a = policy.act(&[s.id() as f64], turn, 0, &mut rng).unwrap();
                assert!(a < 2);
                let p = policy.0.agents[turn.index()]
                    .action_distribution(&s.one_hot())
                    .unwrap();
                let q = m.agents[turn.index()]
                    .action_distribution(&s.one_hot())
                    .unwrap();
                assert_eq!(p, q);
            }
        }
    }

    #[test]
    fn pairs_skip_steps_without_a_successor() {
        let t = run_episode(EnvId::Ipd, &ConstantPolicy(0), &ConstantPolicy(1), 20, 0, 0).unwrap();
        assert_eq!(
            agent_pairs(EnvId::Ipd, std::slice::from_ref(&t), Turn::Leader)
                .unwrap()
                .len(),
            10
        );
        assert_eq!(
            agent_pairs(EnvId::Ipd, &[t], Turn::Follower).unwrap().len(),
            9
        );
    }
}
