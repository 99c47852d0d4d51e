use serde::{Deserialize, Serialize};

use super::LsdnError;
use crate::sdekit::{DriftMode, DEFAULT_DT, SIGMA_MIN};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub hidden: usize,
    pub context_dim: usize,
    pub dt: f64,
    pub obs_noise_std: f64,
    /// Observations are spread over `[0, t_end]`.
    pub t_end: f64,
    pub kl_anneal_iterations: usize,
    pub total_iterations: usize,
    pub base_lr: f64,
    pub lr_decay: f64,
    pub lambda_inv: f64,
    pub drift_mode: DriftMode,
    pub seed: u64,
    pub batch_size: usize,
    /// Iterations between checkpoints; 0 means 1% of `total_iterations`.
    pub checkpoint_every: usize,
    /// Argmax instead of sampling at rollout.
    pub greedy: bool,
    pub sigma_min: f64,
    /// Diffusion level at initialization.
    pub init_sigma: f64,
    /// Standard deviation of the initial latent at initialization.
    pub init_z0_std: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::ipd()
    }
}

impl ModelConfig {
    pub fn ipd() -> Self {
        Self {
            latent_dim: 4,
            hidden: 16,
            context_dim: 1,
            dt: DEFAULT_DT,
            obs_noise_std: 0.05,
            t_end: 2.0,
            kl_anneal_iterations: 200,
            total_iterations: 1000,
            base_lr: 0.001,
            lr_decay: 0.999,
            lambda_inv: 1.0,
            drift_mode: DriftMode::Split,
            seed: 0,
            batch_size: 32,
            checkpoint_every: 0,
            greedy: false,
            sigma_min: SIGMA_MIN,
            init_sigma: 0.05,
            init_z0_std: 0.1,
        }
    }

    pub fn mpe() -> Self {
        Self {
            latent_dim: 16,
            hidden: 128,
            kl_anneal_iterations: 1000,
            total_iterations: 20_000,
            ..Self::ipd()
        }
    }

    /// Reduced particle setting that trains in minutes on one core.
    pub fn mpe_desk() -> Self {
        Self {
            latent_dim: 16,
            context_dim: 8,
            hidden: 64,
            kl_anneal_iterations: 1000,
            total_iterations: 4000,
            batch_size: 8,
            base_lr: 0.005,
            lr_decay: 0.9995,
            greedy: true,
            ..Self::ipd()
        }
    }

    pub fn checkpoint_cadence(&self) -> usize {
        if self.checkpoint_every > 0 {
            self.checkpoint_every
        } else {
            (self.total_iterations / 100).max(1)
        }
    }

    /// KL weight: 0 at iteration 0, 1 from `kl_anneal_iterations` on.
    pub fn beta(&self, iteration: usize) -> f64 {
        if self.kl_anneal_iterations == 0 {
            1.0
        } else {
            (iteration as f64 / self.kl_anneal_iterations as f64).min(1.0)
        }
    }

    pub fn validate(&self) -> Result<(), LsdnError> {
        let bad = |field: &str, why: &str| Err(LsdnError::Config(format!("{field}: {why}")));
        if self.latent_dim == 0
            || (self.drift_mode == DriftMode::Split && !self.latent_dim.is_multiple_of(2))
        {
            return bad("latent_dim", "must be positive and even in split mode");
        }
        if self.hidden == 0 || self.context_dim == 0 || self.batch_size == 0 {
            return bad("hidden/context_dim/batch_size", "must be positive");
        }
        if !(self.obs_noise_std > 0.0) {
            return bad("obs_noise_std", "must be positive");
        }
        if self.kl_anneal_iterations > self.total_iterations {
            return bad("kl_anneal_iterations", "cannot exceed total_iterations");
        }
        if !(self.dt > 0.0) || !(self.t_end > 0.0) {
            return bad("dt/t_end", "must be positive");
        }
        if !(self.sigma_min > 0.0 && self.sigma_min < 1.0) {
            return bad("sigma_min", "must lie in (0, 1)");
        }
        if !(self.init_sigma > self.sigma_min && self.init_sigma < 1.0) {
            return bad("init_sigma", "must lie in (sigma_min, 1)");
        }
        if !(self.init_z0_std > 0.0) {
            return bad("init_z0_std", "must be positive");
        }
        Ok(())
    }
}
