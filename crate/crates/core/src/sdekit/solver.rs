use std::ops::Range;

use super::{
    BrownianPath, DiffusionField, DriftField, PhaseSchedule, SdeError, StepInfo, TimeGrid,
};
use crate::gradcore::{Graph, Scalar, Tensor, Var};

/// A latent SDE `dz = h(z, t) dt + sigma(z, t) dW`. When `reference` is set,
/// the solver also accumulates the pathwise KL against that drift.
pub struct Sde<'a, S> {
    pub drift: &'a dyn DriftField<S>,
    pub diffusion: &'a dyn DiffusionField<S>,
    pub reference: Option<&'a dyn DriftField<S>>,
}

pub struct SdePathResult {
    /// `states[0]` is the initial latent; one more entry per step.
    pub states: Vec<Var>,
    /// Per-sample KL integral, `[batch x 1]`; zero without a reference drift.
    pub kl: Var,
}

fn step_info<S: Scalar>(grid: &TimeGrid<S>, schedule: &PhaseSchedule, k: usize) -> StepInfo<S> {
    StepInfo {
        step: k,
        t: grid.time(k),
        actor: schedule.actor(k),
        interval: schedule.interval(k),
    }
}

fn guard_floor<S: Scalar>(
    g: &Graph<'_, S>,
    sigma: Var,
    floor: S,
    step: usize,
) -> Result<(), SdeError> {
    let floor = floor.as_f64();
    match g
        .value(sigma)
        .values()
        .iter()
        .map(|v| v.as_f64())
        .find(|&v| !(v > 0.0 && v >= floor))
    {
        Some(value) => Err(SdeError::DiffusionBelowFloor { step, value, floor }),
        None => Ok(()),
    }
}

/// `0.5 * dt * |(h_post - h_prior) / sigma|^2`, row by row.
pub fn kl_increment<S: Scalar>(
    g: &mut Graph<'_, S>,
    h_post: Var,
    h_prior: Var,
    sigma: Var,
    dt: S,
) -> Result<Var, SdeError> {
    let gap = g.sub(h_post, h_prior)?;
    let u = g.div(gap, sigma)?;
    let u2 = g.square(u);
    let s = g.row_sum(u2);
    Ok(g.scale(s, S::lit(0.5) * dt))
}

/// Euler-Maruyama over grid steps `steps`:
/// `z_{k+1} = z_k + h(z_k, t_k) dt + sigma(z_k, t_k) * dW_k`.
///
/// `path.increments[i]` drives step `steps.start + i`.
pub fn euler_maruyama<S: Scalar>(
    g: &mut Graph<'_, S>,
    sde: &Sde<'_, S>,
    z0: Var,
    grid: &TimeGrid<S>,
    schedule: &PhaseSchedule,
    path: &BrownianPath<S>,
    steps: Range<usize>,
) -> Result<SdePathResult, SdeError> {
    if steps.end > grid.steps() || path.steps() < steps.len() {
        return Err(SdeError::Config(format!(
            "steps {steps:?} need {} increments within a {}-step grid, have {}",
            steps.len(),
            grid.steps(),
            path.steps()
        )));
    }
    let dt = grid.dt();
    let batch = g.value(z0).rows();
    let mut kl = g.constant(Tensor::zeros(batch, 1));
    let mut z = z0;
    let mut states = Vec::with_capacity(steps.len() + 1);
    states.push(z0);
    for (i, k) in steps.enumerate() {
        let at = step_info(grid, schedule, k);
        let h = sde.drift.drift(g, z, &at)?;
        let sigma = sde.diffusion.diffusion(g, z, &at)?;
        if let Some(reference) = sde.reference {
            guard_floor(g, sigma, sde.diffusion.floor(), k)?;
            let h0 = reference.drift(g, z, &at)?;
            let inc = kl_increment(g, h, h0, sigma, dt)?;
            kl = g.add(kl, inc)?;
        }
        let dw = g.constant(path.increments[i].clone());
        let noise = g.mul(sigma, dw)?;
        let step = g.scale(h, dt);
        let next = g.add(z, step)?;
        z = g.add(next, noise)?;
        if !g.value(z).is_finite() {
            return Err(SdeError::NonFinite { step: k });
        }
        states.push(z);
    }
    Ok(SdePathResult { states, kl })
}

/// Left-endpoint sum of `0.5 * |(h_post - h_prior) / sigma|^2 dt` along a
/// given latent path; `path[i]` sits at grid step `start + i` and the last
/// state only closes the final interval.
#[allow(clippy::too_many_arguments)]
pub fn pathwise_kl<S: Scalar>(
    g: &mut Graph<'_, S>,
    posterior: &dyn DriftField<S>,
    prior: &dyn DriftField<S>,
    diffusion: &dyn DiffusionField<S>,
    path: &[Var],
    grid: &TimeGrid<S>,
    schedule: &PhaseSchedule,
    start: usize,
) -> Result<Var, SdeError> {
    let first = path
        .first()
        .ok_or_else(|| SdeError::Config("empty latent path".into()))?;
    let mut kl = g.constant(Tensor::zeros(g.value(*first).rows(), 1));
    for (i, &z) in path[..path.len() - 1].iter().enumerate() {
        let at = step_info(grid, schedule, start + i);
        let sigma = diffusion.diffusion(g, z, &at)?;
        guard_floor(g, sigma, diffusion.floor(), at.step)?;
        let hp = posterior.drift(g, z, &at)?;
        let hq = prior.drift(g, z, &at)?;
        let inc = kl_increment(g, hp, hq, sigma, grid.dt())?;
        kl = g.add(kl, inc)?;
    }
    Ok(kl)
}
