//! Fixed-step simulation of latent SDEs with separate agent drifts and a
//! shared diagonal diffusion, plus the pathwise KL between a posterior and a
//! prior SDE that share that diffusion.

mod brownian;
mod fields;
mod grid;
mod solver;

pub use brownian::{sample_brownian, BrownianPath};
pub use fields::{
    ConditionedDrift, ConstantDiffusion, DiffusionField, DiffusionSpec, DriftField, DriftMode,
    DriftSpec, LinearDrift, StepInfo,
};
pub use grid::{PhaseSchedule, TimeGrid};
pub use solver::{euler_maruyama, kl_increment, pathwise_kl, Sde, SdePathResult};

use crate::gradcore::GradError;

/// Default Euler step.
pub const DEFAULT_DT: f64 = 0.01;
/// Lower bound on every diffusion output.
pub const SIGMA_MIN: f64 = 1e-3;

#[derive(Debug, thiserror::Error)]
pub enum SdeError {
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite latent state at step {step}")]
    NonFinite { step: usize },
    #[error("diffusion {value} below floor {floor} at step {step}")]
    DiffusionBelowFloor { step: usize, value: f64, floor: f64 },
}
