//! Numeric property suites run by `lsdn check`.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use lsdn_core::demos::{build_demonstrators, generate_demos, Demonstrator};
use lsdn_core::eval::{
    check_latent_divergence_bound, check_suboptimality_bound, empirical_occupancy,
    occupancy_measure, DivergenceCase, FDivergence, IpdPolicyTable, OccupancyKey, OccupancyTable,
    RewardTable,
};
use lsdn_core::games::{ipd_step, run_episode, EnvId, IpdAction, IpdState};
use lsdn_core::gradcore::{
    grad_check, Activation, AdamState, GradError, Graph, Mlp, ParamStore, Tensor,
};
use lsdn_core::lsdn::{elbo, ElboNoise, ModelBundle, ModelConfig, PreparedData};
use lsdn_core::sdekit::{
    euler_maruyama, sample_brownian, BrownianPath, ConstantDiffusion, DiffusionSpec, DriftMode,
    DriftSpec, LinearDrift, PhaseSchedule, Sde, TimeGrid,
};
use lsdn_core::{seeds, Turn};

use crate::CliError;

pub const SUITES: [&str; 7] = [
    "gradients",
    "brownian",
    "kl",
    "latent-bound",
    "return-bound",
    "occupancy",
    "injectivity",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub passed: bool,
    /// One line per check.
    pub lines: Vec<String>,
    pub elapsed: Duration,
}

impl SuiteOutcome {
    pub fn summary(&self) -> String {
        let mut s = format!(
            "{}: {} ({:.2}s)\n",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.elapsed.as_secs_f64()
        );
        for l in &self.lines {
            s.push_str("  ");
            s.push_str(l);
            s.push('\n');
        }
        s
    }
}

struct Checks {
    lines: Vec<String>,
    passed: bool,
}

impl Checks {
    fn new() -> Self {
        Self {
            lines: Vec::new(),
            passed: true,
        }
    }

    fn check(&mut self, ok: bool, line: String) {
        self.passed &= ok;
        self.lines
            .push(format!("[{}] {line}", if ok { "ok" } else { "FAIL" }));
    }
}

/// Runs one suite by name.
pub fn run_suite(name: &str) -> Result<SuiteOutcome, CliError> {
    let start = Instant::now();
    let (name, checks): (&'static str, Checks) = match name {
        "gradients" => ("gradients", gradients()?),
        "brownian" => ("brownian", brownian()?),
        "kl" => ("kl", kl()?),
        "latent-bound" => ("latent-bound", latent_bound()?),
        "return-bound" => ("return-bound", return_bound()?),
        "occupancy" => ("occupancy", occupancy()?),
        "injectivity" => ("injectivity", injectivity()?),
        other => {
            return Err(CliError::Usage(format!(
                "unknown suite '{other}'; known: {}, all",
                SUITES.join(", ")
            )))
        }
    };
    Ok(SuiteOutcome {
        name,
        passed: checks.passed,
        lines: checks.lines,
        elapsed: start.elapsed(),
    })
}

fn grad_err(e: impl std::fmt::Display) -> GradError {
    GradError::Argument(e.to_string())
}

/// Small model on a two-decision IPD trajectory.
pub fn gradient_toy() -> Result<(ModelBundle<f64>, PreparedData), CliError> {
    let config = ModelConfig {
        latent_dim: 2,
        hidden: 3,
        context_dim: 1,
        dt: 0.1,
        t_end: 1.0,
        obs_noise_std: 0.5,
        kl_anneal_iterations: 1,
        total_iterations: 1,
        seed: 3,
        init_sigma: 0.5,
        init_z0_std: 1.0,
        ..ModelConfig::ipd()
    };
    let model = ModelBundle::<f64>::new(EnvId::Ipd, config)?;
    let mut rng = seeds::rng(4);
    let (l, f) = (
        IpdPolicyTable::random(&mut rng),
        IpdPolicyTable::random(&mut rng),
    );
    let trajs: Vec<_> = (0..2)
        .map(|i| run_episode(EnvId::Ipd, &l, &f, 2, i, seeds::derive(5, i as u64)))
        .collect::<Result<_, _>>()?;
    let data = PreparedData::new(EnvId::Ipd, &trajs)?;
    Ok((model, data))
}

/// Autodiff against central differences for every parameter group of the
/// frozen-noise ELBO, and for the anchor regression on its own parameters
/// (its target latent is detached, so only the anchor group sees it).
fn gradients() -> Result<Checks, CliError> {
    let (model, data) = gradient_toy()?;
    let batch = data.batch::<f64>(&[0, 1]);
    let noise = ElboNoise::sample(&model, 2, &mut seeds::rng(6))?;
    let beta = 0.7;
    let total = |g: &mut Graph<'_, f64>| {
        Ok(elbo(g, &model, &batch, &noise, beta)
            .map_err(grad_err)?
            .total)
    };
    let anchor = |g: &mut Graph<'_, f64>| {
        Ok(elbo(g, &model, &batch, &noise, beta)
            .map_err(grad_err)?
            .anchor)
    };
    let mut c = Checks::new();
    for (group, ids) in model.param_groups() {
        let r = grad_check(&model.store, total, 1e-5, Some(&ids))?;
        c.check(
            r.passed(1e-6),
            format!(
                "elbo / {group}: {} elements, max relative error {:.3e} at {:?}",
                r.checked, r.max_rel_error, r.worst
            ),
        );
        if group == "anchor" {
            let r = grad_check(&model.store, anchor, 1e-5, Some(&ids))?;
            c.check(
                r.passed(1e-6),
                format!(
                    "anchor loss / {group}: {} elements, max relative error {:.3e} at {:?}",
                    r.checked, r.max_rel_error, r.worst
                ),
            );
        }
    }
    Ok(c)
}

fn simulate(
    sde: &Sde<'_, f64>,
    store: &ParamStore<f64>,
    z0: Tensor<f64>,
    grid: &TimeGrid<f64>,
    path: &BrownianPath<f64>,
) -> Result<(Tensor<f64>, Vec<f64>), CliError> {
    let mut g = Graph::new(store);
    let z = g.constant(z0);
    let schedule = PhaseSchedule::single(grid.steps());
    let out = euler_maruyama(&mut g, sde, z, grid, &schedule, path, 0..grid.steps())?;
    let end = g
        .value(*out.states.last().expect("at least the initial state"))
        .clone();
    Ok((end, g.value(out.kl).values().to_vec()))
}

fn brownian() -> Result<Checks, CliError> {
    let mut c = Checks::new();
    let store = ParamStore::new();
    let grid = TimeGrid::new(1.0, 0.01)?;
    let n = 10_000;
    for sigma in [0.3, 0.8, 1.5] {
        let path = sample_brownian(&grid, n, 1, &mut seeds::rng(11));
        let sde = Sde {
            drift: &LinearDrift { a: 0.0, b: 0.0 },
            diffusion: &ConstantDiffusion(sigma),
            reference: None,
        };
        let (end, _) = simulate(&sde, &store, Tensor::zeros(n, 1), &grid, &path)?;
        let v = end.values();
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let want = sigma * sigma * grid.t_end();
        c.check(
            (var / want - 1.0).abs() < 0.05,
            format!("sigma {sigma}: variance {var:.5} vs {want:.5} over {n} paths"),
        );
    }
    let path = BrownianPath::zeros(grid.steps(), 1, 1);
    let sde = Sde {
        drift: &LinearDrift { a: 0.5, b: 0.0 },
        diffusion: &ConstantDiffusion(0.0),
        reference: None,
    };
    let (end, _) = simulate(&sde, &store, Tensor::scalar(1.0), &grid, &path)?;
    let e = 0.5f64.exp();
    c.check(
        (end.item() - e).abs() < 0.01,
        format!("drift 0.5 z: z(1) = {:.5} vs e^0.5 = {e:.5}", end.item()),
    );
    Ok(c)
}

fn kl() -> Result<Checks, CliError> {
    let mut c = Checks::new();
    let mut store = ParamStore::new();
    let spec = DriftSpec::new(
        &mut store,
        "p",
        2,
        &[4],
        0,
        DriftMode::Split,
        &mut seeds::rng(1),
    )?;
    let diff = DiffusionSpec::new(&mut store, "s", 2, &[4], 1e-3, &mut seeds::rng(2));
    let grid = TimeGrid::new(1.0, 0.01)?;
    let path = sample_brownian(&grid, 3, 2, &mut seeds::rng(3));
    let sde = Sde {
        drift: &spec,
        diffusion: &diff,
        reference: Some(&spec),
    };
    let (_, kl) = simulate(&sde, &store, Tensor::zeros(3, 2), &grid, &path)?;
    c.check(
        kl.iter().all(|&k| k == 0.0),
        format!("identical neural drifts: kl {kl:?}"),
    );
    for (dim, gap, t_end) in [(1usize, 2.0, 1.0), (3, 1.5, 2.0), (2, 0.25, 0.5)] {
        let grid = TimeGrid::new(t_end, 0.01)?;
        let path = BrownianPath::zeros(grid.steps(), 1, dim);
        let sde = Sde {
            drift: &LinearDrift { a: 0.0, b: gap },
            diffusion: &ConstantDiffusion(1.0),
            reference: Some(&LinearDrift { a: 0.0, b: 0.0 }),
        };
        let (_, kl) = simulate(
            &sde,
            &ParamStore::new(),
            Tensor::zeros(1, dim),
            &grid,
            &path,
        )?;
        let want = 0.5 * gap * gap * dim as f64 * t_end;
        c.check(
            (kl[0] - want).abs() < 1e-10,
            format!(
                "constant gap {gap} in {dim} dims over T = {t_end}: kl {} vs {want}",
                kl[0]
            ),
        );
    }
    Ok(c)
}

fn latent_bound() -> Result<Checks, CliError> {
    let mut c = Checks::new();
    let mut rng = seeds::rng(31);
    for f in [FDivergence::Kl, FDivergence::Tv] {
        let mut worst = f64::NEG_INFINITY;
        let mut held = 0;
        for _ in 0..100 {
            let r = check_latent_divergence_bound(&DivergenceCase::random(3, 4, 2, f, &mut rng))?;
            held += r.holds as usize;
            worst = worst.max(r.state - r.latent);
        }
        c.check(
            held == 100,
            format!("{f:?}: {held}/100 random cases hold, max state - latent {worst:.3e}"),
        );
        let mut case = DivergenceCase::random(3, 4, 2, f, &mut rng);
        case.emission = (0..3)
            .map(|z| (0..4).map(|s| if s == z { 1.0 } else { 0.0 }).collect())
            .collect();
        let r = check_latent_divergence_bound(&case)?;
        c.check(
            r.holds && (r.state - r.latent).abs() < 1e-9,
            format!(
                "{f:?}: identity emission {:.12} vs {:.12}",
                r.state, r.latent
            ),
        );
        let mut case = DivergenceCase::random(3, 4, 2, f, &mut rng);
        case.emission = vec![
            vec![1.0, 0.0, 0.0, 0.0],
            vec![1.0, 0.0, 0.0, 0.0],
            vec![0.0, 1.0, 0.0, 0.0],
        ];
        case.expert[2] = case.learned[2].clone();
        case.learned[0] = vec![0.8, 0.2];
        case.expert[0] = vec![0.2, 0.8];
        case.learned[1] = vec![0.2, 0.8];
        case.expert[1] = vec![0.8, 0.2];
        let r = check_latent_divergence_bound(&case)?;
        c.check(
            r.holds,
            format!(
                "{f:?}: collapsing emission {:.6} <= {:.6}",
                r.state, r.latent
            ),
        );
    }
    Ok(c)
}

fn return_bound() -> Result<Checks, CliError> {
    let mut c = Checks::new();
    let mut rng = seeds::rng(41);
    let reward = RewardTable::ipd_joint();
    let (mut held, mut tightest) = (0, f64::INFINITY);
    for _ in 0..50 {
        let learned = (
            IpdPolicyTable::random(&mut rng),
            IpdPolicyTable::random(&mut rng),
        );
        let expert = (
            IpdPolicyTable::random(&mut rng),
            IpdPolicyTable::random(&mut rng),
        );
        let r = check_suboptimality_bound(
            EnvId::Ipd,
            (&learned.0, &learned.1),
            (&expert.0, &expert.1),
            0.95,
            &reward,
            20,
        )?;
        held += r.holds as usize;
        tightest = tightest.min(r.rhs - r.lhs);
    }
    c.check(held == 50, format!("{held}/50 random policy pairs satisfy the bound (gamma 0.95, H 20), min slack {tightest:.4}"));
    Ok(c)
}

fn occupancy() -> Result<Checks, CliError> {
    let mut c = Checks::new();
    let mut rng = seeds::rng(51);
    let mut worst: f64 = 0.0;
    for gamma in [0.5, 0.9, 0.95, 0.99] {
        for horizon in [1, 2, 7, 20] {
            let (l, f) = (
                IpdPolicyTable::random(&mut rng),
                IpdPolicyTable::random(&mut rng),
            );
            let t = occupancy_measure(EnvId::Ipd, &l, &f, gamma, horizon)?;
            worst = worst
                .max((t.total_mass() - OccupancyTable::closed_form_mass(gamma, horizon)).abs());
        }
    }
    c.check(
        worst < 1e-12,
        format!("total mass vs (1 - gamma^H)/(1 - gamma): max error {worst:.3e} over 16 tables"),
    );

    let (l, f) = (
        IpdPolicyTable::random(&mut rng),
        IpdPolicyTable::random(&mut rng),
    );
    let (gamma, horizon, n) = (0.9, 20, 100_000usize);
    let exact = occupancy_measure(EnvId::Ipd, &l, &f, gamma, horizon)?;
    let mut sums: BTreeMap<OccupancyKey, (f64, f64)> = BTreeMap::new();
    for i in 0..n {
        let t = run_episode(EnvId::Ipd, &l, &f, horizon, i, seeds::derive(77, i as u64))?;
        for (k, v) in empirical_occupancy(&[t], gamma)?.mass {
            let e = sums.entry(k).or_insert((0.0, 0.0));
            e.0 += v;
            e.1 += v * v;
        }
    }
    let mut outside = 0;
    let mut max_z: f64 = 0.0;
    for (k, &m) in &exact.mass {
        let (s, s2) = sums.get(k).copied().unwrap_or((0.0, 0.0));
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        if (mean - m).abs() > 3.0 * se + 1e-12 {
            outside += 1;
        }
        if se > 0.0 {
            max_z = max_z.max((mean - m).abs() / se);
        }
    }
    let unexpected = sums.keys().filter(|k| !exact.mass.contains_key(k)).count();
    c.check(
        outside == 0 && unexpected == 0,
        format!("{n} rollouts vs exact table: {outside} of {} entries beyond 3 SE (max {max_z:.2} SE), {unexpected} unseen keys", exact.mass.len()),
    );
    Ok(c)
}

/// Held-out accuracy of an inverse-dynamics network trained on IPD
/// demonstration triples.
pub fn inverse_dynamics_accuracy(epochs: usize) -> Result<(f64, usize), CliError> {
    let env = EnvId::Ipd;
    let (l, f) = build_demonstrators(env, Demonstrator::Q, Demonstrator::TftImp, 17)?;
    let ds = generate_demos(env, &l, &f, ("q", "tft-imp"), 200, 17)?;
    let mut rows = Vec::new();
    for t in &ds.trajectories {
        for r in &t.records {
            let mut x = env.features(&r.state)?;
            x.extend(env.features(&r.next_state)?);
            x.push(r.actor.flag());
            rows.push((t.episode, x, r.action));
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = rows.into_iter().partition(|(ep, _, _)| ep % 5 != 0);
    let width = train[0].1.len();
    let tensor = |rs: &[(usize, Vec<f64>, usize)]| {
        let flat: Vec<f64> = rs.iter().flat_map(|(_, x, _)| x.iter().copied()).collect();
        Tensor::from_f64(rs.len(), width, &flat)
    };
    let (xtr, ytr): (Tensor<f64>, Vec<usize>) =
        (tensor(&train), train.iter().map(|r| r.2).collect());
    let mut store = ParamStore::new();
    let net = Mlp::new(
        &mut store,
        "inverse",
        width,
        &[16],
        env.num_actions(),
        Activation::Softplus,
        &mut seeds::rng(18),
    );
    let mut adam = AdamState::new(&store, 0.01, 1.0);
    for _ in 0..epochs {
        let mut g = Graph::new(&store);
        let x = g.constant(xtr.clone());
        let logits = net.forward(&mut g, x)?;
        let ce = g.cross_entropy(logits, &ytr)?;
        let loss = g.scale(ce, 1.0 / ytr.len() as f64);
        let grads = g.backward(loss)?;
        drop(g);
        adam.step(&mut store, &grads)?;
    }
    let mut g = Graph::new(&store);
    let x = g.constant(tensor(&test));
    let logits = net.forward(&mut g, x)?;
    let lv = g.value(logits);
    let correct = test
        .iter()
        .enumerate()
        .filter(|(i, r)| {
            let row = lv.row_slice(*i);
            let pred = if row[1] > row[0] { 1 } else { 0 };
            pred == r.2
        })
        .count();
    Ok((correct as f64 / test.len() as f64, test.len()))
}

fn injectivity() -> Result<Checks, CliError> {
    let mut c = Checks::new();
    let mut collisions = Vec::new();
    let mut pairs = 0;
    for turn in [Turn::Leader, Turn::Follower] {
        for s in IpdState::ALL {
            if s == IpdState::Start && turn == Turn::Follower {
                continue;
            }
            let next: Vec<IpdState> = IpdAction::ALL
                .iter()
                .map(|&a| ipd_step(s, a, turn).0)
                .collect();
            pairs += 1;
            if next[0] == next[1] {
                collisions.push(format!("{s:?}/{turn}"));
            }
        }
    }
    c.check(collisions.is_empty(), format!("(state, actor) -> action recoverable from the next state in {pairs}/{pairs} cases {collisions:?}"));
    let (acc, n) = inverse_dynamics_accuracy(300)?;
    c.check(
        acc >= 0.99,
        format!("trained inverse dynamics: held-out accuracy {acc:.4} on {n} triples"),
    );
    Ok(c)
}
