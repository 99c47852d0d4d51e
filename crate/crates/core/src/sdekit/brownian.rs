use rand::Rng;
use rand_distr::StandardNormal;

use super::TimeGrid;
use crate::gradcore::{Scalar, Tensor};

/// Brownian increments, one `[batch x dim]` block per Euler step.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPath<S> {
    pub increments: Vec<Tensor<S>>,
}

impl<S: Scalar> BrownianPath<S> {
    pub fn zeros(steps: usize, batch: usize, dim: usize) -> Self {
        Self {
            increments: vec![Tensor::zeros(batch, dim); steps],
        }
    }

    pub fn from_increments(increments: Vec<Tensor<S>>) -> Self {
        Self { increments }
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    /// Independent `sqrt(dt) * N(0, 1)` draws.
    pub fn sample<R: Rng + ?Sized>(
        steps: usize,
        dt: S,
        batch: usize,
        dim: usize,
        rng: &mut R,
    ) -> Self {
        let sd = dt.as_f64().sqrt();
        let increments = (0..steps)
            .map(|_| {
                let v = (0..batch * dim)
                    .map(|_| S::lit(sd * rng.sample::<f64, _>(StandardNormal)))
                    .collect();
                Tensor::matrix(batch, dim, v).expect("consistent shape")
            })
            .collect();
        Self { increments }
    }
}

/// Full-grid Brownian path for `batch` independent samples.
pub fn sample_brownian<S: Scalar, R: Rng + ?Sized>(
    grid: &TimeGrid<S>,
    batch: usize,
    dim: usize,
    rng: &mut R,
) -> BrownianPath<S> {
    BrownianPath::sample(grid.steps(), grid.dt(), batch, dim, rng)
}
