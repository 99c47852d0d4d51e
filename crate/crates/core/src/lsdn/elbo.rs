use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LsdnError, ModelBundle};
use crate::games::{EnvId, Trajectory};
use crate::gradcore::{Graph, Scalar, Tensor, Var};
use crate::sdekit::{euler_maruyama, sample_brownian, BrownianPath, ConditionedDrift, Sde};
use crate::Turn;

/// One trajectory as model inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedEpisode {
    /// Features of `s_0 ..= s_H`.
    pub features: Vec<Vec<f64>>,
    pub actions: Vec<usize>,
}

/// Equal-length trajectories from one environment, featurized once.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedData {
    pub env: EnvId,
    pub horizon: usize,
    pub episodes: Vec<PreparedEpisode>,
}

impl PreparedData {
    pub fn new(env: EnvId, trajectories: &[Trajectory]) -> Result<Self, LsdnError> {
        let first = trajectories.first().ok_or(LsdnError::EmptyDataset)?;
        let horizon = first.len();
        if horizon == 0 {
            return Err(LsdnError::EmptyDataset);
        }
        let mut episodes = Vec::with_capacity(trajectories.len());
        for t in trajectories {
            if t.env != env || t.len() != horizon {
                return Err(LsdnError::Argument(format!(
                    "episode {} ({}, {} steps) does not match {env} with {horizon} steps",
                    t.episode,
                    t.env,
                    t.len()
                )));
            }
            let features = t
                .states()
                .into_iter()
                .map(|s| env.features(s))
                .collect::<Result<Vec<_>, _>>()?;
            episodes.push(PreparedEpisode {
                features,
                actions: t.records.iter().map(|r| r.action).collect(),
            });
        }
        Ok(Self {
            env,
            horizon,
            episodes,
        })
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn batch<S: Scalar>(&self, idx: &[usize]) -> Batch<S> {
        let rows = |f: &dyn Fn(&PreparedEpisode) -> Vec<f64>| {
            let data: Vec<Vec<S>> = idx
                .iter()
                .map(|&i| f(&self.episodes[i]).into_iter().map(S::lit).collect())
                .collect();
            Tensor::from_rows(&data)
        };
        let obs = (0..=self.horizon)
            .map(|k| rows(&|e| e.features[k].clone()))
            .collect();
        let inverse = (0..self.horizon)
            .map(|k| {
                let flag = Turn::of_step(k).flag();
                let input = rows(&|e| {
                    let mut v = e.features[k].clone();
                    v.extend_from_slice(&e.features[k + 1]);
                    v.push(flag);
                    v
                });
                (
                    input,
                    idx.iter().map(|&i| self.episodes[i].actions[k]).collect(),
                )
            })
            .collect();
        Batch {
            obs,
            inverse,
            size: idx.len(),
        }
    }
}

pub struct Batch<S> {
    /// `H + 1` blocks of `[batch x features]`.
    pub obs: Vec<Tensor<S>>,
    /// Per decision: `(s, s', actor flag)` rows and the taken actions.
    pub inverse: Vec<(Tensor<S>, Vec<usize>)>,
    pub size: usize,
}

/// Frozen randomness of one ELBO evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct ElboNoise<S> {
    pub eps: Tensor<S>,
    pub path: BrownianPath<S>,
}

impl<S: Scalar> ElboNoise<S> {
    pub fn sample<R: Rng + ?Sized>(
        model: &ModelBundle<S>,
        batch: usize,
        rng: &mut R,
    ) -> Result<Self, LsdnError> {
        let (grid, _, _) = model.timeline(1)?;
        let eps = model.sample_eps(batch, rng);
        let path = sample_brownian(&grid, batch, model.config.latent_dim, rng);
        Ok(Self { eps, path })
    }
}

/// Per-trajectory averages over a batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ElboTerms {
    pub reconstruction: f64,
    pub kl: f64,
    pub beta: f64,
    pub inverse_ce: f64,
    /// `reconstruction - beta * kl - lambda_inv * inverse_ce`.
    pub total: f64,
    /// Anchor regression loss (not part of the ELBO).
    pub anchor: f64,
}

pub struct Objective {
    /// ELBO total as a `[1 x 1]` node.
    pub total: Var,
    pub anchor: Var,
    pub terms: ElboTerms,
    /// Posterior latents at the observation stamps.
    pub latents: Vec<Var>,
}

/// Records the frozen-noise ELBO of a batch on `g`.
pub fn elbo<S: Scalar>(
    g: &mut Graph<'_, S>,
    model: &ModelBundle<S>,
    batch: &Batch<S>,
    noise: &ElboNoise<S>,
    beta: f64,
) -> Result<Objective, LsdnError> {
    let horizon = batch.inverse.len();
    let (grid, schedule, stamps) = model.timeline(horizon)?;
    let inv_b = S::lit(1.0 / batch.size as f64);
    let obs: Vec<Var> = batch.obs.iter().map(|t| g.constant(t.clone())).collect();
    let enc = model.encode_posterior(g, &obs, &noise.eps)?;
    let drift = ConditionedDrift {
        spec: &model.posterior,
        contexts: &enc.contexts,
    };
    let sde = Sde {
        drift: &drift,
        diffusion: &model.diffusion,
        reference: Some(&model.prior),
    };
    let path = euler_maruyama(
        g,
        &sde,
        enc.z0,
        &grid,
        &schedule,
        &noise.path,
        0..grid.steps(),
    )?;

    let latents: Vec<Var> = stamps.iter().map(|&k| path.states[k]).collect();
    let mut recon = None;
    let mut anchor = None;
    for (&z, &x) in latents.iter().zip(&obs) {
        let mean = model.decode(g, z)?;
        let ll = model.log_likelihood(g, mean, x)?;
        let ll = g.sum(ll);
        recon = Some(match recon {
            None => ll,
            Some(r) => g.add(r, ll)?,
        });
        let e = model.anchor.forward(g, x)?;
        let target = g.detach(z);
        let diff = g.sub(e, target)?;
        let sq = g.square(diff);
        let sq = g.sum(sq);
        anchor = Some(match anchor {
            None => sq,
            Some(a) => g.add(a, sq)?,
        });
    }
    let recon = g.scale(recon.expect("at least two observations"), inv_b);
    let anchor = g.scale(anchor.expect("at least two observations"), inv_b);

    let kl_rows = g.add(path.kl, enc.z0_kl)?;
    let kl = g.sum(kl_rows);
    let kl = g.scale(kl, inv_b);

    let mut ce = g.constant(Tensor::scalar(S::zero()));
    for (input, targets) in &batch.inverse {
        let x = g.constant(input.clone());
        let logits = model.inverse_logits(g, x)?;
        let c = g.cross_entropy(logits, targets)?;
        ce = g.add(ce, c)?;
    }
    let ce = g.scale(ce, inv_b);

    let lambda = model.config.lambda_inv;
    let weighted_kl = g.scale(kl, S::lit(beta));
    let weighted_ce = g.scale(ce, S::lit(lambda));
    let total = g.sub(recon, weighted_kl)?;
    let total = g.sub(total, weighted_ce)?;

    let (r, k, c) = (
        g.item(recon).as_f64(),
        g.item(kl).as_f64(),
        g.item(ce).as_f64(),
    );
    let terms = ElboTerms {
        reconstruction: r,
        kl: k,
        beta,
        inverse_ce: c,
        total: r - beta * k - lambda * c,
        anchor: g.item(anchor).as_f64(),
    };
    Ok(Objective {
        total,
        anchor,
        terms,
        latents,
    })
}
