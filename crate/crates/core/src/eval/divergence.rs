use rand::Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FDivergence {
    Kl,
    Tv,
}

impl FDivergence {
    /// `D_f(p || q)` of two distributions on the same finite support.
    pub fn eval(self, p: &[f64], q: &[f64]) -> f64 {
        match self {
            FDivergence::Kl => p
                .iter()
                .zip(q)
                .filter(|(&a, _)| a > 0.0)
                .map(|(&a, &b)| {
                    if b > 0.0 {
                        a * (a / b).ln()
                    } else {
                        f64::INFINITY
                    }
                })
                .sum(),
            FDivergence::Tv => 0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>(),
        }
    }
}

/// A finite latent process observed through an emission kernel, with two
/// policies acting on the latent state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceCase {
    /// `P(s | z)`, `|Z| x |S|`.
    pub emission: Vec<Vec<f64>>,
    /// `T(z' | z, a)`, `|Z| x |A| x |Z|`.
    pub transition: Vec<Vec<Vec<f64>>>,
    pub initial: Vec<f64>,
    /// `pi(a | z)`, `|Z| x |A|`.
    pub learned: Vec<Vec<f64>>,
    pub expert: Vec<Vec<f64>>,
    pub gamma: f64,
    pub horizon: usize,
    pub divergence: FDivergence,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceCheck {
    pub state: f64,
    pub latent: f64,
    pub holds: bool,
}

fn random_row<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|_| -rng.random::<f64>().max(1e-300).ln())
        .collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / z).collect()
}

fn stochastic(rows: &[Vec<f64>], width: usize, what: &str) -> Result<(), EvalError> {
    for (i, row) in rows.iter().enumerate() {
        if row.len() != width
            || row.iter().any(|&p| !(p >= 0.0))
            || (row.iter().sum::<f64>() - 1.0).abs() > 1e-12
        {
            return Err(EvalError::Argument(format!(
                "{what} row {i} is not a distribution over {width} outcomes: {row:?}"
            )));
        }
    }
    Ok(())
}

impl DivergenceCase {
    /// Dirichlet(1) kernels and policies.
    pub fn random<R: Rng + ?Sized>(
        nz: usize,
        ns: usize,
        na: usize,
        divergence: FDivergence,
        rng: &mut R,
    ) -> Self {
        Self {
            emission: (0..nz).map(|_| random_row(ns, rng)).collect(),
            transition: (0..nz)
                .map(|_| (0..na).map(|_| random_row(nz, rng)).collect())
                .collect(),
            initial: random_row(nz, rng),
            learned: (0..nz).map(|_| random_row(na, rng)).collect(),
            expert: (0..nz).map(|_| random_row(na, rng)).collect(),
            gamma: 0.9,
            horizon: 10,
            divergence,
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (
            self.emission.len(),
            self.emission.first().map_or(0, Vec::len),
            self.learned.first().map_or(0, Vec::len),
        )
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let (nz, ns, na) = self.dims();
        if nz == 0 || ns == 0 || na == 0 {
            return Err(EvalError::Argument(
                "empty latent, state or action set".into(),
            ));
        }
        stochastic(&self.emission, ns, "emission")?;
        stochastic(std::slice::from_ref(&self.initial), nz, "initial")?;
        stochastic(&self.learned, na, "learned policy")?;
        stochastic(&self.expert, na, "expert policy")?;
        if self.learned.len() != nz || self.expert.len() != nz || self.transition.len() != nz {
            return Err(EvalError::Argument(
                "kernels disagree on the latent set size".into(),
            ));
        }
        for (z, rows) in self.transition.iter().enumerate() {
            if rows.len() != na {
                return Err(EvalError::Argument(format!(
                    "transition from latent {z} has {} actions",
                    rows.len()
                )));
            }
            stochastic(rows, nz, "transition")?;
        }
        Ok(())
    }

    /// Normalized discounted occupancy over `(z, a, z')`, flattened.
    pub fn latent_occupancy(&self, policy: &[Vec<f64>]) -> Vec<f64> {
        let (nz, _, na) = self.dims();
        let mut rho = vec![0.0; nz * na * nz];
        let mut dist = self.initial.clone();
        let mut w = 1.0;
        for _ in 0..self.horizon {
            let mut next = vec![0.0; nz];
            for z in 0..nz {
                for a in 0..na {
                    let p = dist[z] * policy[z][a];
                    for z2 in 0..nz {
                        let m = p * self.transition[z][a][z2];
                        rho[(z * na + a) * nz + z2] += w * m;
                        next[z2] += m;
                    }
                }
            }
            dist = next;
            w *= self.gamma;
        }
        let total: f64 = rho.iter().sum();
        rho.iter().map(|m| m / total).collect()
    }

    /// `rho(s, a, s') = sum_{z, z'} rho(z, a, z') P(s | z) P(s' | z')`.
    pub fn state_occupancy(&self, latent: &[f64]) -> Vec<f64> {
        let (nz, ns, na) = self.dims();
        let mut out = vec![0.0; ns * na * ns];
        for z in 0..nz {
            for a in 0..na {
                for z2 in 0..nz {
                    let m = latent[(z * na + a) * nz + z2];
                    for s in 0..ns {
                        for s2 in 0..ns {
                            out[(s * na + a) * ns + s2] +=
                                m * self.emission[z][s] * self.emission[z2][s2];
                        }
                    }
                }
            }
        }
        out
    }
}

/// Compares the divergence of the two policies' occupancies in state space
/// with the one in latent space.
pub fn check_latent_divergence_bound(case: &DivergenceCase) -> Result<DivergenceCheck, EvalError> {
    case.validate()?;
    let (lz, ez) = (
        case.latent_occupancy(&case.learned),
        case.latent_occupancy(&case.expert),
    );
    let (ls, es) = (case.state_occupancy(&lz), case.state_occupancy(&ez));
    let latent = case.divergence.eval(&lz, &ez);
    let state = case.divergence.eval(&ls, &es);
    Ok(DivergenceCheck {
        state,
        latent,
        holds: state <= latent + 1e-9,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;

    #[test]
    fn random_cases_hold() {
        let mut rng = seeds::rng(31);
        for f in [FDivergence::Kl, FDivergence::Tv] {
            for _ in 0..100 {
                let case = DivergenceCase::random(3, 4, 2, f, &mut rng);
                let r = check_latent_divergence_bound(&case).unwrap();
                assert!(r.holds, "{r:?}");
                assert!(r.state >= 0.0);
            }
        }
    }

    #[test]
    fn identity_emission_is_tight() {
        let mut rng = seeds::rng(32);
        for f in [FDivergence::Kl, FDivergence::Tv] {
            let mut case = DivergenceCase::random(3, 4, 2, f, &mut rng);
            case.emission = (0..3)
                .map(|z| (0..4).map(|s| if s == z { 1.0 } else { 0.0 }).collect())
                .collect();
            let r = check_latent_divergence_bound(&case).unwrap();
            assert!((r.state - r.latent).abs() < 1e-12 && r.holds, "{r:?}");
        }
    }

    #[test]
    fn collapsing_emission_loses_information() {
        let mut rng = seeds::rng(33);
        for f in [FDivergence::Kl, FDivergence::Tv] {
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
            let r = check_latent_divergence_bound(&case).unwrap();
            assert!(r.holds && r.state < r.latent - 1e-6, "{r:?}");
        }
    }

    #[test]
    fn rejects_non_stochastic_kernels() {
        let mut case = DivergenceCase::random(3, 4, 2, FDivergence::Tv, &mut seeds::rng(1));
        case.transition[1][0][2] += 0.1;
        assert!(check_latent_divergence_bound(&case).is_err());
        let mut case = DivergenceCase::random(3, 4, 2, FDivergence::Kl, &mut seeds::rng(1));
        case.emission[0][0] = -0.5;
        assert!(check_latent_divergence_bound(&case).is_err());
    }
}
