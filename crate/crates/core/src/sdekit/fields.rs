use rand::Rng;
use serde::{Deserialize, Serialize};

use super::SdeError;
use crate::gradcore::{Activation, Graph, Mlp, ParamId, ParamStore, Scalar, Tensor, Var};
use crate::Turn;

/// Where the solver currently is.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo<S> {
    pub step: usize,
    pub t: S,
    pub actor: Turn,
    pub interval: usize,
}

pub trait DriftField<S: Scalar> {
    /// Drift for a `[batch x d]` latent.
    fn drift(&self, g: &mut Graph<'_, S>, z: Var, at: &StepInfo<S>) -> Result<Var, SdeError>;
}

pub trait DiffusionField<S: Scalar> {
    /// Diagonal diffusion for a `[batch x d]` latent.
    fn diffusion(&self, g: &mut Graph<'_, S>, z: Var, at: &StepInfo<S>) -> Result<Var, SdeError>;

    fn floor(&self) -> S {
        S::zero()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftMode {
    /// Leader head drives dims `[0, d/2)`, follower head `[d/2, d)`.
    #[default]
    Split,
    /// The acting agent's head drives all `d` dims; the other is ignored.
    PhaseGated,
}

/// Two-headed drift. Each head sees `[z, t, actor flag, extra...]`, where
/// `extra` is the posterior context (empty for the prior).
#[derive(Clone, Debug, PartialEq)]
pub struct DriftSpec {
    pub leader: Mlp,
    pub follower: Mlp,
    pub mode: DriftMode,
    pub latent_dim: usize,
    pub extra_dim: usize,
}

impl DriftSpec {
    #[allow(clippy::too_many_arguments)]
    pub fn new<S: Scalar, R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        latent_dim: usize,
        hidden: &[usize],
        extra_dim: usize,
        mode: DriftMode,
        rng: &mut R,
    ) -> Result<Self, SdeError> {
        let out = match mode {
            DriftMode::Split => {
                if !latent_dim.is_multiple_of(2) {
                    return Err(SdeError::Config(format!(
                        "split drift needs an even latent dimension, got {latent_dim}"
                    )));
                }
                latent_dim / 2
            }
            DriftMode::PhaseGated => latent_dim,
        };
        let input = latent_dim + 2 + extra_dim;
        let leader = Mlp::new(
            store,
            &format!("{name}.leader"),
            input,
            hidden,
            out,
            Activation::Softplus,
            rng,
        );
        let follower = Mlp::new(
            store,
            &format!("{name}.follower"),
            input,
            hidden,
            out,
            Activation::Softplus,
            rng,
        );
        Ok(Self {
            leader,
            follower,
            mode,
            latent_dim,
            extra_dim,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.leader.param_ids();
        ids.extend(self.follower.param_ids());
        ids
    }

    /// Drift at `(z, t)` for the given acting agent.
    pub fn compose_drift<S: Scalar>(
        &self,
        g: &mut Graph<'_, S>,
        z: Var,
        t: S,
        actor: Turn,
        extra: Option<Var>,
    ) -> Result<Var, SdeError> {
        let batch = g.value(z).rows();
        if g.value(z).cols() != self.latent_dim {
            return Err(SdeError::Config(format!(
                "latent has {} dims, drift expects {}",
                g.value(z).cols(),
                self.latent_dim
            )));
        }
        let mut cols = Vec::with_capacity(2 * batch);
        let flag = S::lit(actor.flag());
        for _ in 0..batch {
            cols.push(t);
            cols.push(flag);
        }
        let tc = g.constant(Tensor::matrix(batch, 2, cols)?);
        let input = match (extra, self.extra_dim) {
            (None, 0) => g.concat_cols(&[z, tc])?,
            (Some(e), n) if n > 0 && g.value(e).cols() == n => g.concat_cols(&[z, tc, e])?,
            _ => {
                return Err(SdeError::Config(format!(
                    "drift expects {} extra input columns",
                    self.extra_dim
                )))
            }
        };
        match self.mode {
            DriftMode::Split => {
                let l = self.leader.forward(g, input)?;
                let f = self.follower.forward(g, input)?;
                Ok(g.concat_cols(&[l, f])?)
            }
            DriftMode::PhaseGated => {
                let head = match actor {
                    Turn::Leader => &self.leader,
                    Turn::Follower => &self.follower,
                };
                Ok(head.forward(g, input)?)
            }
        }
    }
}

impl<S: Scalar> DriftField<S> for DriftSpec {
    fn drift(&self, g: &mut Graph<'_, S>, z: Var, at: &StepInfo<S>) -> Result<Var, SdeError> {
        self.compose_drift(g, z, at.t, at.actor, None)
    }
}

/// A posterior drift holding one context column per decision interval.
pub struct ConditionedDrift<'a> {
    pub spec: &'a DriftSpec,
    pub contexts: &'a [Var],
}

impl<S: Scalar> DriftField<S> for ConditionedDrift<'_> {
    fn drift(&self, g: &mut Graph<'_, S>, z: Var, at: &StepInfo<S>) -> Result<Var, SdeError> {
        let ctx = self.contexts[at.interval.min(self.contexts.len() - 1)];
        self.spec.compose_drift(g, z, at.t, at.actor, Some(ctx))
    }
}

/// Shared diagonal diffusion `floor + (1 - floor) * sigmoid(net(z, t, flag))`,
/// so every output lies in `[floor, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionSpec<S> {
    pub net: Mlp,
    pub floor: S,
    pub latent_dim: usize,
}

impl<S: Scalar> DiffusionSpec<S> {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParamStore<S>,
        name: &str,
        latent_dim: usize,
        hidden: &[usize],
        floor: S,
        rng: &mut R,
    ) -> Self {
        let net = Mlp::new(
            store,
            name,
            latent_dim + 2,
            hidden,
            latent_dim,
            Activation::Softplus,
            rng,
        )
        .with_output_activation(Activation::Sigmoid);
        Self {
            net,
            floor,
            latent_dim,
        }
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.net.param_ids()
    }
}

impl<S: Scalar> DiffusionField<S> for DiffusionSpec<S> {
    fn diffusion(&self, g: &mut Graph<'_, S>, z: Var, at: &StepInfo<S>) -> Result<Var, SdeError> {
        let batch = g.value(z).rows();
        let mut cols = Vec::with_capacity(2 * batch);
        for _ in 0..batch {
            cols.push(at.t);
            cols.push(S::lit(at.actor.flag()));
        }
        let tc = g.constant(Tensor::matrix(batch, 2, cols)?);
        let input = g.concat_cols(&[z, tc])?;
        let s = self.net.forward(g, input)?;
        let s = g.scale(s, S::one() - self.floor);
        Ok(g.add_scalar(s, self.floor))
    }

    fn floor(&self) -> S {
        self.floor
    }
}

/// Elementwise affine drift `a * z + b`, identical for both agents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearDrift<S> {
    pub a: S,
    pub b: S,
}

impl<S: Scalar> DriftField<S> for LinearDrift<S> {
    fn drift(&self, g: &mut Graph<'_, S>, z: Var, _at: &StepInfo<S>) -> Result<Var, SdeError> {
        let h = g.scale(z, self.a);
        Ok(g.add_scalar(h, self.b))
    }
}

/// Diffusion fixed at `c` in every coordinate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConstantDiffusion<S>(pub S);

impl<S: Scalar> DiffusionField<S> for ConstantDiffusion<S> {
    fn diffusion(&self, g: &mut Graph<'_, S>, z: Var, _at: &StepInfo<S>) -> Result<Var, SdeError> {
        let (r, c) = (g.value(z).rows(), g.value(z).cols());
        Ok(g.constant(Tensor::full(r, c, self.0)))
    }
}
