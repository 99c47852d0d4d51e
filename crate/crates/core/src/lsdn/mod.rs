//! The latent-SDE imitation model: posterior encoder, prior and posterior
//! latent SDEs, linear decoder, inverse dynamics, ELBO training with KL
//! annealing, checkpoint selection, the rollout policy and the ablation
//! that replaces the latent SDE with per-agent next-state regressors.

mod ablation;
mod config;
mod elbo;
mod model;
mod policy;
mod train;

pub use ablation::{train_ablation, AblationConfig, AblationModel, AblationPolicy, AgentAblation};
pub use config::ModelConfig;
pub use elbo::{elbo, Batch, ElboNoise, ElboTerms, Objective, PreparedData, PreparedEpisode};
pub use model::{embed_times, ModelBundle, PosteriorEncoding};
pub use policy::LsdnPolicy;
pub use train::{
    select_checkpoint, train, CheckpointSummary, IterationRecord, TrainedModel, Trainer,
    TrainingHistory,
};

use crate::games::GameError;
use crate::gradcore::GradError;
use crate::sdekit::SdeError;

#[derive(Debug, thiserror::Error)]
pub enum LsdnError {
    #[error(transparent)]
    Sde(#[from] SdeError),
    #[error(transparent)]
    Grad(#[from] GradError),
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("non-finite loss at iteration {iteration}: recon-nll {recon_nll}, kl {kl}, inverse-ce {inverse_ce}")]
    NonFinite {
        iteration: usize,
        recon_nll: f64,
        kl: f64,
        inverse_ce: f64,
    },
    #[error("empty dataset")]
    EmptyDataset,
}
