//! Evaluation metrics, exact tabular occupancy measures and numeric checks
//! of the occupancy-based suboptimality bound and the latent divergence
//! bound.

mod divergence;
mod histogram;
mod occupancy;
mod report;
mod returns;

pub use divergence::{check_latent_divergence_bound, DivergenceCase, DivergenceCheck, FDivergence};
pub use histogram::{
    dis_jsd, distance_histograms, jsd_base2, kl_divergence, position_kld, Histogram, PositionKld,
    DIS_BINS, POSITION_BINS, SMOOTHING,
};
pub use occupancy::{
    check_suboptimality_bound, empirical_occupancy, expected_return, occupancy_measure,
    tv_distance, BoundCheck, IpdPolicyTable, OccupancyKey, OccupancyTable, RewardTable,
    DEFAULT_GAMMA,
};
pub use report::{
    aggregate_reports, metrics_report, AggregateReport, EpisodeReturn, GapSummary, MetricsReport,
    DEFAULT_EVAL_EPISODES,
};
pub use returns::{episode_returns, ReturnStats};

use crate::games::GameError;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("seed overlap: {0}")]
    SeedOverlap(String),
    #[error(transparent)]
    Game(#[from] GameError),
}
