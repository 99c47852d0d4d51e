use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::games::{Trajectory, ARENA};

pub const DIS_BINS: usize = 50;
pub const POSITION_BINS: usize = 32;
pub const SMOOTHING: f64 = 1e-9;

/// Uniform-bin histogram with additive smoothing.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<f64>,
    pub eps: f64,
}

impl Histogram {
    pub fn uniform(lo: f64, hi: f64, bins: usize, eps: f64) -> Result<Self, EvalError> {
        if !(hi > lo) || bins == 0 || !lo.is_finite() || !hi.is_finite() {
            return Err(EvalError::Argument(format!(
                "bad histogram range [{lo}, {hi}] with {bins} bins"
            )));
        }
        let edges = (0..=bins)
            .map(|i| lo + (hi - lo) * i as f64 / bins as f64)
            .collect();
        Ok(Self {
            edges,
            counts: vec![0.0; bins],
            eps,
        })
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    /// Bin of `x`; the upper edge belongs to the last bin.
    pub fn bin(&self, x: f64) -> Option<usize> {
        let (lo, hi) = (self.edges[0], self.edges[self.bins()]);
        if !(x >= lo && x <= hi) {
            return None;
        }
        Some((((x - lo) / (hi - lo) * self.bins() as f64) as usize).min(self.bins() - 1))
    }

    /// Counts `x`; returns false when it lies outside the range.
    pub fn add(&mut self, x: f64) -> bool {
        match self.bin(x) {
            Some(i) => {
                self.counts[i] += 1.0;
                true
            }
            None => false,
        }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    /// `(c / n + eps) / (1 + bins * eps)`.
    pub fn probabilities(&self) -> Vec<f64> {
        smoothed(&self.counts, self.eps)
    }
}

fn smoothed(counts: &[f64], eps: f64) -> Vec<f64> {
    let n: f64 = counts.iter().sum();
    let k = counts.len() as f64;
    if n == 0.0 {
        return vec![1.0 / k; counts.len()];
    }
    counts
        .iter()
        .map(|c| (c / n + eps) / (1.0 + k * eps))
        .collect()
}

/// `KL(p || q)` in nats.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b).ln())
        .sum()
}

/// Jensen-Shannon divergence in bits.
pub fn jsd_base2(p: &[f64], q: &[f64]) -> f64 {
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let v = 0.5 * (kl_divergence(p, &m) + kl_divergence(q, &m)) / std::f64::consts::LN_2;
    v.clamp(0.0, 1.0)
}

/// Histograms of two samples over their pooled range; `None` when the
/// range is a single point.
fn paired_histograms(
    a: &[f64],
    b: &[f64],
    bins: usize,
) -> Result<Option<(Histogram, Histogram)>, EvalError> {
    if a.is_empty() || b.is_empty() {
        return Err(EvalError::Argument("empty sample".into()));
    }
    let lo = a.iter().chain(b).copied().fold(f64::INFINITY, f64::min);
    let hi = a.iter().chain(b).copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return Ok(None);
    }
    let mut ha = Histogram::uniform(lo, hi, bins, SMOOTHING)?;
    let mut hb = ha.clone();
    a.iter().for_each(|&x| {
        ha.add(x);
    });
    b.iter().for_each(|&x| {
        hb.add(x);
    });
    Ok(Some((ha, hb)))
}

/// JSD of two samples binned over their pooled range.
pub(crate) fn jsd_of_samples(a: &[f64], b: &[f64], bins: usize) -> Result<f64, EvalError> {
    Ok(match paired_histograms(a, b, bins)? {
        Some((ha, hb)) => jsd_base2(&ha.probabilities(), &hb.probabilities()),
        None => 0.0,
    })
}

fn positions(trajectories: &[Trajectory]) -> Result<Vec<[[f64; 2]; 2]>, EvalError> {
    let mut out = Vec::new();
    for t in trajectories {
        for s in t.states() {
            out.push(t.env.positions(s).ok_or_else(|| {
                EvalError::Argument(format!("{} states carry no positions", t.env))
            })?);
        }
    }
    Ok(out)
}

fn distances(trajectories: &[Trajectory]) -> Result<Vec<f64>, EvalError> {
    Ok(positions(trajectories)?
        .iter()
        .map(|[l, f]| ((l[0] - f[0]).powi(2) + (l[1] - f[1]).powi(2)).sqrt())
        .collect())
}

/// JSD (bits) between the inter-agent distance distributions of two
/// trajectory sets, one distance per physics tick.
pub fn dis_jsd(demo: &[Trajectory], learned: &[Trajectory]) -> Result<f64, EvalError> {
    jsd_of_samples(&distances(demo)?, &distances(learned)?, DIS_BINS)
}

/// `(demo, learned)` inter-agent distance histograms on the pooled range
/// used by [`dis_jsd`]; `None` when every distance is identical.
pub fn distance_histograms(
    demo: &[Trajectory],
    learned: &[Trajectory],
) -> Result<Option<(Histogram, Histogram)>, EvalError> {
    paired_histograms(&distances(demo)?, &distances(learned)?, DIS_BINS)
}

/// `(KL(learned || demo), KL(demo || learned))` of positional densities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositionKld {
    /// `[leader, follower]`.
    pub per_agent: [(f64, f64); 2],
    pub pooled: (f64, f64),
}

pub(crate) fn grid_probabilities(points: &[[f64; 2]], bound: f64, bins: usize) -> Vec<f64> {
    let mut counts = vec![0.0; bins * bins];
    let cell = |x: f64| {
        (((x + bound) / (2.0 * bound) * bins as f64).floor().max(0.0) as usize).min(bins - 1)
    };
    for p in points {
        counts[cell(p[0]) * bins + cell(p[1])] += 1.0;
    }
    smoothed(&counts, SMOOTHING)
}

fn both_directions(demo: &[[f64; 2]], learned: &[[f64; 2]]) -> (f64, f64) {
    let p = grid_probabilities(learned, ARENA, POSITION_BINS);
    let q = grid_probabilities(demo, ARENA, POSITION_BINS);
    (kl_divergence(&p, &q), kl_divergence(&q, &p))
}

pub fn position_kld(demo: &[Trajectory], learned: &[Trajectory]) -> Result<PositionKld, EvalError> {
    let (d, l) = (positions(demo)?, positions(learned)?);
    let agent = |k: usize, xs: &[[[f64; 2]; 2]]| xs.iter().map(|p| p[k]).collect::<Vec<_>>();
    let pooled = |xs: &[[[f64; 2]; 2]]| xs.iter().flat_map(|p| *p).collect::<Vec<_>>();
    Ok(PositionKld {
        per_agent: [
            both_directions(&agent(0, &d), &agent(0, &l)),
            both_directions(&agent(1, &d), &agent(1, &l)),
        ],
        pooled: both_directions(&pooled(&d), &pooled(&l)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{run_episode, ConstantPolicy, EnvId};
    use crate::seeds;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    // Composite Simpson rule.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    fn pdf(m: f64, sd: f64) -> impl Fn(f64) -> f64 {
        move |x| (-0.5 * ((x - m) / sd).powi(2)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
    }

    fn bin_masses(f: &dyn Fn(f64) -> f64, edges: &[f64]) -> Vec<f64> {
        let raw: Vec<f64> = edges
            .windows(2)
            .map(|w| simpson(f, w[0], w[1], 64))
            .collect();
        let z: f64 = raw.iter().sum();
        smoothed(&raw.iter().map(|r| r / z).collect::<Vec<_>>(), SMOOTHING)
    }

    #[test]
    fn histogram_edges_and_bins() {
        let mut h = Histogram::uniform(0.0, 1.0, 4, 0.0).unwrap();
        assert!(h.add(0.0) && h.add(1.0) && h.add(0.3));
        assert!(!h.add(1.5));
        assert_eq!(h.counts, vec![1.0, 1.0, 0.0, 1.0]);
        assert!(h.edges.windows(2).all(|w| w[1] > w[0]));
        assert!(Histogram::uniform(1.0, 1.0, 4, 0.0).is_err());
    }

    #[test]
    fn jsd_extremes() {
        let a: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        assert_eq!(jsd_of_samples(&a, &a, 50).unwrap(), 0.0);
        let b: Vec<f64> = a.iter().map(|x| x + 10.0).collect();
        assert!((jsd_of_samples(&a, &b, 50).unwrap() - 1.0).abs() < 1e-6);
        assert!(jsd_of_samples(&a, &[], 50).is_err());
    }

    #[test]
    fn jsd_matches_quadrature_oracle() {
        let mut rng = seeds::rng(9);
        let (na, nb) = (
            Normal::new(0.0, 1.0).unwrap(),
            Normal::new(1.0, 0.7).unwrap(),
        );
        let a: Vec<f64> = (0..100_000).map(|_| na.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..100_000).map(|_| nb.sample(&mut rng)).collect();
        let est = jsd_of_samples(&a, &b, DIS_BINS).unwrap();
        let lo = a.iter().chain(&b).copied().fold(f64::INFINITY, f64::min);
        let hi = a
            .iter()
            .chain(&b)
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let edges: Vec<f64> = (0..=DIS_BINS)
            .map(|i| lo + (hi - lo) * i as f64 / DIS_BINS as f64)
            .collect();
        let oracle = jsd_base2(
            &bin_masses(&pdf(0.0, 1.0), &edges),
            &bin_masses(&pdf(1.0, 0.7), &edges),
        );
        assert!((est - oracle).abs() < 0.01, "{est} vs {oracle}");
    }

    #[test]
    fn position_kld_matches_quadrature_oracle() {
        // Axis-aligned Gaussian mixtures truncated to the arena.
        let comps_p = [(0.5, [-0.3, 0.2], 0.6), (0.5, [0.4, -0.1], 0.5)];
        let comps_q = [(0.7, [-0.2, 0.1], 0.7), (0.3, [0.3, 0.3], 0.5)];
        let mut rng = seeds::rng(10);
        let mut sample = |comps: &[(f64, [f64; 2], f64)]| -> Vec<[f64; 2]> {
            let mut out = Vec::new();
            while out.len() < 100_000 {
                let (_, m, sd) = if rng.random::<f64>() < comps[0].0 {
                    comps[0]
                } else {
                    comps[1]
                };
                let n = Normal::new(0.0, sd).unwrap();
                let p = [m[0] + n.sample(&mut rng), m[1] + n.sample(&mut rng)];
                if p[0].abs() <= 1.0 && p[1].abs() <= 1.0 {
                    out.push(p);
                }
            }
            out
        };
        let (sp, sq) = (sample(&comps_p), sample(&comps_q));
        let p = grid_probabilities(&sp, 1.0, POSITION_BINS);
        let q = grid_probabilities(&sq, 1.0, POSITION_BINS);
        let oracle = |comps: &[(f64, [f64; 2], f64)]| {
            let edges: Vec<f64> = (0..=POSITION_BINS)
                .map(|i| -1.0 + 2.0 * i as f64 / POSITION_BINS as f64)
                .collect();
            let mut cells = vec![0.0; POSITION_BINS * POSITION_BINS];
            for &(w, m, sd) in comps {
                let mx: Vec<f64> = edges
                    .windows(2)
                    .map(|e| simpson(pdf(m[0], sd), e[0], e[1], 32))
                    .collect();
                let my: Vec<f64> = edges
                    .windows(2)
                    .map(|e| simpson(pdf(m[1], sd), e[0], e[1], 32))
                    .collect();
                for i in 0..POSITION_BINS {
                    for j in 0..POSITION_BINS {
                        cells[i * POSITION_BINS + j] += w * mx[i] * my[j];
                    }
                }
            }
            let z: f64 = cells.iter().sum();
            smoothed(&cells.iter().map(|c| c / z).collect::<Vec<_>>(), SMOOTHING)
        };
        let (op, oq) = (oracle(&comps_p), oracle(&comps_q));
        let est = (kl_divergence(&p, &q), kl_divergence(&q, &p));
        let exact = (kl_divergence(&op, &oq), kl_divergence(&oq, &op));
        assert!((est.0 - exact.0).abs() < 0.02, "{est:?} vs {exact:?}");
        assert!((est.1 - exact.1).abs() < 0.02, "{est:?} vs {exact:?}");
    }

    #[test]
    fn kl_is_asymmetric() {
        let spread: Vec<[f64; 2]> = (0..64)
            .flat_map(|i| (0..64).map(move |j| [i as f64 / 32.0 - 0.99, j as f64 / 32.0 - 0.99]))
            .collect();
        let tight: Vec<[f64; 2]> = spread.iter().filter(|p| p[0] < 0.0).copied().collect();
        let (p, q) = (
            grid_probabilities(&tight, 1.0, POSITION_BINS),
            grid_probabilities(&spread, 1.0, POSITION_BINS),
        );
        let (a, b) = (kl_divergence(&p, &q), kl_divergence(&q, &p));
        assert!((a - 2f64.ln()).abs() < 1e-4 && b > 5.0, "{a} {b}");
    }

    #[test]
    fn identical_particle_sets() {
        let t: Vec<_> = (0..3)
            .map(|i| {
                run_episode(
                    EnvId::Predatorprey,
                    &ConstantPolicy(1),
                    &ConstantPolicy(3),
                    68,
                    i,
                    i as u64,
                )
                .unwrap()
            })
            .collect();
        assert_eq!(dis_jsd(&t, &t).unwrap(), 0.0);
        let k = position_kld(&t, &t).unwrap();
        assert_eq!(k.pooled, (0.0, 0.0));
        assert_eq!(k.per_agent, [(0.0, 0.0); 2]);
        let ipd =
            [run_episode(EnvId::Ipd, &ConstantPolicy(0), &ConstantPolicy(0), 20, 0, 0).unwrap()];
        assert!(dis_jsd(&ipd, &ipd).is_err());
    }
}
