use rand::Rng;
use rand_distr::StandardNormal;

use super::{LsdnError, ModelConfig};
use crate::games::EnvId;
use crate::gradcore::{
    softmax, Activation, Checkpoint, Graph, Gru, Mlp, ParamId, ParamStore, Scalar, Tensor, Var,
};
use crate::sdekit::{DiffusionSpec, DriftSpec, PhaseSchedule, TimeGrid};
use crate::seeds;
use crate::Turn;

/// Grid step of each of `n` observations spread evenly over `[0, t_end]`.
pub fn embed_times(n: usize, config: &ModelConfig) -> Result<Vec<usize>, LsdnError> {
    if n < 2 {
        return Err(LsdnError::Argument(format!(
            "need at least 2 observations, got {n}"
        )));
    }
    let stamps: Vec<usize> = (0..n)
        .map(|i| (config.t_end * i as f64 / (n - 1) as f64 / config.dt).round() as usize)
        .collect();
    if stamps.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LsdnError::Argument(format!(
            "{n} observations do not fit distinct steps of dt = {}",
            config.dt
        )));
    }
    Ok(stamps)
}

/// Every learnable part of the model, in one parameter store.
#[derive(Clone, Debug)]
pub struct ModelBundle<S> {
    pub config: ModelConfig,
    pub env: EnvId,
    pub feature_dim: usize,
    pub num_actions: usize,
    pub store: ParamStore<S>,
    pub prior: DriftSpec,
    /// Same heads as the prior plus context inputs.
    pub posterior: DriftSpec,
    /// Shared by prior and posterior.
    pub diffusion: DiffusionSpec<S>,
    pub gru: Gru,
    pub context_head: Mlp,
    pub z0_mean: ParamId,
    pub z0_logstd: ParamId,
    /// Maps the first context onto a shift of the initial latent mean.
    pub z0_context: ParamId,
    pub anchor: Mlp,
    pub decoder: Mlp,
    pub inverse: Mlp,
}

pub struct PosteriorEncoding {
    /// One `[batch x context_dim]` context per observation.
    pub contexts: Vec<Var>,
    pub z0: Var,
    /// KL of the context-shifted initial Gaussian from the unshifted one, `[batch x 1]`.
    pub z0_kl: Var,
}

impl<S: Scalar> ModelBundle<S> {
    pub fn new(env: EnvId, config: ModelConfig) -> Result<Self, LsdnError> {
        config.validate()?;
        let mut rng = seeds::rng(seeds::derive(config.seed, 0x1A17));
        let mut store = ParamStore::new();
        let (d, h, c) = (config.latent_dim, config.hidden, config.context_dim);
        let f = env.feature_dim();
        let a = env.num_actions();
        let prior = DriftSpec::new(&mut store, "prior", d, &[h], 0, config.drift_mode, &mut rng)?;
        let posterior = DriftSpec::new(
            &mut store,
            "posterior",
            d,
            &[h],
            c,
            config.drift_mode,
            &mut rng,
        )?;
        let diffusion = DiffusionSpec::new(
            &mut store,
            "diffusion",
            d,
            &[h],
            S::lit(config.sigma_min),
            &mut rng,
        );
        let level = (config.init_sigma - config.sigma_min) / (1.0 - config.sigma_min);
        let out_bias = store
            .find("diffusion.1.bias")
            .expect("diffusion output bias");
        *store.get_mut(out_bias) = Tensor::full(1, d, S::lit((level / (1.0 - level)).ln()));
        let gru = Gru::new(&mut store, "gru", f, h, &mut rng);
        let context_head = Mlp::new(
            &mut store,
            "context",
            h,
            &[],
            c,
            Activation::Softplus,
            &mut rng,
        );
        let z0_mean = store.add("z0.mean", Tensor::zeros(1, d));
        let z0_logstd = store.add(
            "z0.logstd",
            Tensor::full(1, d, S::lit(config.init_z0_std.ln())),
        );
        let z0_context = store.add_uniform("z0.context", c, d, c, &mut rng);
        let anchor = Mlp::new(
            &mut store,
            "anchor",
            f,
            &[h],
            d,
            Activation::Softplus,
            &mut rng,
        );
        let decoder = Mlp::new(
            &mut store,
            "decoder",
            d,
            &[],
            f,
            Activation::Softplus,
            &mut rng,
        );
        let inverse = Mlp::new(
            &mut store,
            "inverse",
            2 * f + 1,
            &[h],
            a,
            Activation::Softplus,
            &mut rng,
        );
        Ok(Self {
            config,
            env,
            feature_dim: f,
            num_actions: a,
            store,
            prior,
            posterior,
            diffusion,
            gru,
            context_head,
            z0_mean,
            z0_logstd,
            z0_context,
            anchor,
            decoder,
            inverse,
        })
    }

    /// Parameter ids by component.
    pub fn param_groups(&self) -> Vec<(&'static str, Vec<ParamId>)> {
        vec![
            ("prior-drift", self.prior.param_ids()),
            ("posterior-drift", self.posterior.param_ids()),
            ("diffusion", self.diffusion.param_ids()),
            (
                "gru",
                [self.gru.param_ids(), self.context_head.param_ids()].concat(),
            ),
            (
                "initial-latent",
                vec![self.z0_mean, self.z0_logstd, self.z0_context],
            ),
            ("decoder", self.decoder.param_ids()),
            ("inverse-dynamics", self.inverse.param_ids()),
            ("anchor", self.anchor.param_ids()),
        ]
    }

    /// Observation stamps and the phase schedule for an episode of `horizon` decisions.
    pub fn timeline(
        &self,
        horizon: usize,
    ) -> Result<(TimeGrid<S>, PhaseSchedule, Vec<usize>), LsdnError> {
        let stamps = embed_times(horizon + 1, &self.config)?;
        let grid = TimeGrid::new(S::lit(self.config.t_end), S::lit(self.config.dt))?;
        let schedule = PhaseSchedule::new(stamps[..stamps.len() - 1].to_vec(), grid.steps())?;
        Ok((grid, schedule, stamps))
    }

    /// Reverse-GRU contexts and the initial latent `mean + c_0 W + exp(logstd) * eps`.
    pub fn encode_posterior(
        &self,
        g: &mut Graph<'_, S>,
        obs: &[Var],
        eps: &Tensor<S>,
    ) -> Result<PosteriorEncoding, LsdnError> {
        let hidden = self.gru.run_reverse(g, obs)?;
        let contexts = hidden
            .iter()
            .map(|&h| self.context_head.forward(g, h))
            .collect::<Result<Vec<_>, _>>()?;
        let mean = g.param(self.z0_mean);
        let logstd = g.param(self.z0_logstd);
        let w = g.param(self.z0_context);
        let shift = g.matmul(contexts[0], w)?;
        let centre = g.add_row(shift, mean)?;
        let std = g.exp(logstd);
        let e = g.constant(eps.clone());
        let noise = g.mul_row(e, std)?;
        let z0 = g.add(centre, noise)?;
        let neg = g.neg(logstd);
        let inv_std = g.exp(neg);
        let u = g.mul_row(shift, inv_std)?;
        let u2 = g.square(u);
        let s = g.row_sum(u2);
        let z0_kl = g.scale(s, S::lit(0.5));
        Ok(PosteriorEncoding {
            contexts,
            z0,
            z0_kl,
        })
    }

    pub fn decode(&self, g: &mut Graph<'_, S>, z: Var) -> Result<Var, LsdnError> {
        Ok(self.decoder.forward(g, z)?)
    }

    /// Independent Gaussian log-density of `x` around `mean`, `[batch x 1]`.
    pub fn log_likelihood(
        &self,
        g: &mut Graph<'_, S>,
        mean: Var,
        x: Var,
    ) -> Result<Var, LsdnError> {
        let sd = self.config.obs_noise_std;
        let diff = g.sub(x, mean)?;
        let r = g.scale(diff, S::lit(1.0 / sd));
        let r2 = g.square(r);
        let s = g.row_sum(r2);
        let s = g.scale(s, S::lit(-0.5));
        let per_coord = -0.5 * (2.0 * std::f64::consts::PI).ln() - sd.ln();
        Ok(g.add_scalar(s, S::lit(per_coord * self.feature_dim as f64)))
    }

    /// Logits of the acting agent's action for each row of `(s, s', flag)`.
    pub fn inverse_logits(&self, g: &mut Graph<'_, S>, input: Var) -> Result<Var, LsdnError> {
        Ok(self.inverse.forward(g, input)?)
    }

    pub fn inverse_input(&self, s: &[f64], s_next: &[f64], actor: Turn) -> Vec<S> {
        s.iter()
            .chain(s_next)
            .chain(std::iter::once(&actor.flag()))
            .map(|&v| S::lit(v))
            .collect()
    }

    /// Softmax over the acting agent's actions.
    pub fn predict_action(
        &self,
        s: &[f64],
        s_next: &[f64],
        actor: Turn,
    ) -> Result<Vec<f64>, LsdnError> {
        let logits = self
            .inverse
            .eval(&self.store, &self.inverse_input(s, s_next, actor))?;
        Ok(softmax(&logits).iter().map(|p| p.as_f64()).collect())
    }

    /// Anchor latent `e_psi(features)`.
    pub fn anchor_latent(&self, features: &[f64]) -> Result<Vec<S>, LsdnError> {
        let x: Vec<S> = features.iter().map(|&v| S::lit(v)).collect();
        Ok(self.anchor.eval(&self.store, &x)?)
    }

    pub fn decode_values(&self, z: &[S]) -> Result<Vec<f64>, LsdnError> {
        Ok(self
            .decoder
            .eval(&self.store, z)?
            .iter()
            .map(|v| v.as_f64())
            .collect())
    }

    /// Gaussian noise for the initial latent of `batch` samples.
    pub fn sample_eps<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Tensor<S> {
        let d = self.config.latent_dim;
        let v = (0..batch * d)
            .map(|_| S::lit(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        Tensor::matrix(batch, d, v).expect("consistent shape")
    }

    pub fn to_checkpoint(&self) -> Checkpoint<S> {
        let meta = serde_json::json!({ "env": self.env, "config": self.config });
        Checkpoint::new(self.store.named_entries(), meta)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint<S>) -> Result<Self, LsdnError> {
        let env: EnvId = serde_json::from_value(ckpt.meta["env"].clone())
            .map_err(|e| LsdnError::Config(format!("checkpoint env: {e}")))?;
        let config: ModelConfig = serde_json::from_value(ckpt.meta["config"].clone())
            .map_err(|e| LsdnError::Config(format!("checkpoint config: {e}")))?;
        let mut model = Self::new(env, config)?;
        let names: Vec<String> = model.store.iter().map(|(_, n, _)| n.to_string()).collect();
        let entries: Vec<(String, Tensor<S>)> = ckpt
            .entries
            .iter()
            .filter(|(n, _)| names.contains(n))
            .cloned()
            .collect();
        model.store.load_named(&entries)?;
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::IpdState;

    #[test]
    fn time_embedding() {
        let c = ModelConfig::ipd();
        let s = embed_times(10, &c).unwrap();
        assert_eq!(s.len(), 10);
        assert_eq!((s[0], s[1], s[9]), (0, 22, 200));
        assert_eq!(embed_times(2, &c).unwrap(), vec![0, 200]);
        let p = embed_times(68, &c).unwrap();
        assert_eq!(p.len(), 68);
        assert!(p.windows(2).all(|w| w[1] > w[0]));
        assert!(
            p.windows(2).map(|w| w[1] - w[0]).max().unwrap() as f64 * c.dt
                <= 2.0 / 67.0 + c.dt / 2.0
        );
        assert!(embed_times(1, &c).is_err());
    }

    #[test]
    fn log_likelihood_at_and_off_mean() {
        let model = ModelBundle::<f64>::new(EnvId::Ipd, ModelConfig::ipd()).unwrap();
        let mut g = Graph::new(&model.store);
        let at = -0.5 * (2.0 * std::f64::consts::PI).ln() - 0.05f64.ln();
        assert!((at - 2.076_793_740_349_318).abs() < 1e-12);
        let x = g.constant(Tensor::from_f64(1, 5, &[1.0, 0.0, 0.0, 0.0, 0.0]));
        let m = g.constant(Tensor::from_f64(1, 5, &[1.05, 0.0, 0.0, 0.0, 0.0]));
        let ll = model.log_likelihood(&mut g, m, x).unwrap();
        assert!((g.item(ll) - (5.0 * at - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn zero_decoder_returns_bias() {
        let mut model = ModelBundle::<f64>::new(EnvId::Ipd, ModelConfig::ipd()).unwrap();
        model.store.zero_prefix("decoder");
        let b = model.decoder.layers[0].bias;
        model
            .store
            .get_mut(b)
            .values_mut()
            .copy_from_slice(&[0.1, 0.2, 0.3, 0.4, 0.5]);
        for z in [[0.0; 4], [3.0, -1.0, 2.0, 9.0]] {
            assert_eq!(
                model.decode_values(&z).unwrap(),
                vec![0.1, 0.2, 0.3, 0.4, 0.5]
            );
        }
    }

    #[test]
    fn zero_gru_gives_zero_contexts() {
        let mut model = ModelBundle::<f64>::new(EnvId::Ipd, ModelConfig::ipd()).unwrap();
        model.store.zero_prefix("gru");
        model.store.zero_prefix("context");
        let mut g = Graph::new(&model.store);
        let obs: Vec<Var> = (0..3)
            .map(|i| g.constant(Tensor::row(IpdState::ALL[i].one_hot().to_vec())))
            .collect();
        let enc = model
            .encode_posterior(&mut g, &obs, &Tensor::zeros(1, 4))
            .unwrap();
        assert!(enc.contexts.iter().all(|&c| g.value(c).values() == [0.0]));
        assert_eq!(g.item(enc.z0_kl), 0.0);
        let single = model
            .encode_posterior(&mut g, &obs[..1], &Tensor::zeros(1, 4))
            .unwrap();
        assert_eq!(single.contexts.len(), 1);
    }

    #[test]
    fn untrained_zero_inverse_is_uniform() {
        let mut model =
            ModelBundle::<f64>::new(EnvId::Predatorprey, ModelConfig::mpe_desk()).unwrap();
        model.store.zero_prefix("inverse");
        let p = model
            .predict_action(&[0.0; 8], &[0.1; 8], Turn::Leader)
            .unwrap();
        assert!(p.iter().all(|&x| (x - 0.2).abs() < 1e-15));
    }

    #[test]
    fn checkpoint_roundtrip() {
        let model = ModelBundle::<f64>::new(
            EnvId::Ipd,
            ModelConfig {
                seed: 5,
                ..ModelConfig::ipd()
            },
        )
        .unwrap();
        let bytes = model.to_checkpoint().to_bytes();
        let back =
            ModelBundle::<f64>::from_checkpoint(&Checkpoint::from_bytes(&bytes).unwrap()).unwrap();
        assert_eq!(back.store.named_entries(), model.store.named_entries());
        assert_eq!(back.config, model.config);
    }
}
