//! Latent stochastic-differential-equation imitation learning for
//! turn-based Stackelberg games.
//!
//! The numeric core ([`gradcore`], [`sdekit`], [`lsdn`]) is generic over the
//! floating point type; the aliases below fix it to `f64`, which every
//! gradient check and training run uses.

pub mod demos;
pub mod eval;
pub mod games;
pub mod gradcore;
pub mod lsdn;
pub mod sdekit;
pub mod seeds;
mod turn;

pub use turn::Turn;

pub type Tensor64 = gradcore::Tensor<f64>;
pub type Tensor32 = gradcore::Tensor<f32>;
pub type ParamStore64 = gradcore::ParamStore<f64>;
pub type Graph64<'p> = gradcore::Graph<'p, f64>;
