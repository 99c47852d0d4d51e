use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::games::Trajectory;

/// Undiscounted episode returns averaged over episodes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReturnStats {
    pub episodes: usize,
    /// `[leader, follower]`.
    pub mean: [f64; 2],
    pub std: [f64; 2],
    pub total_mean: f64,
    pub total_std: f64,
    /// Leader outscoring the follower; ties count one half.
    pub win_rate: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    (m, var.sqrt())
}

pub fn episode_returns(trajectories: &[Trajectory]) -> Result<ReturnStats, EvalError> {
    let first = trajectories
        .first()
        .ok_or_else(|| EvalError::Argument("no trajectories".into()))?;
    if let Some(t) = trajectories.iter().find(|t| t.env != first.env) {
        return Err(EvalError::Argument(format!(
            "mixed environments: {} and {}",
            first.env, t.env
        )));
    }
    let returns: Vec<[f64; 2]> = trajectories.iter().map(Trajectory::returns).collect();
    let (lm, ls) = mean_std(&returns.iter().map(|r| r[0]).collect::<Vec<_>>());
    let (fm, fs) = mean_std(&returns.iter().map(|r| r[1]).collect::<Vec<_>>());
    let (tm, ts) = mean_std(&returns.iter().map(|r| r[0] + r[1]).collect::<Vec<_>>());
    let wins: f64 = returns
        .iter()
        .map(|r| match r[0].partial_cmp(&r[1]) {
            Some(std::cmp::Ordering::Greater) => 1.0,
            Some(std::cmp::Ordering::Equal) => 0.5,
            _ => 0.0,
        })
        .sum();
    Ok(ReturnStats {
        episodes: returns.len(),
        mean: [lm, fm],
        std: [ls, fs],
        total_mean: tm,
        total_std: ts,
        win_rate: wins / returns.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{run_episode, ConstantPolicy, EnvId};

    #[test]
    fn all_cooperate_ties() {
        let t: Vec<_> = (0..3)
            .map(|i| {
                run_episode(EnvId::Ipd, &ConstantPolicy(0), &ConstantPolicy(0), 20, i, 0).unwrap()
            })
            .collect();
        let s = episode_returns(&t).unwrap();
        assert_eq!(
            (s.mean, s.total_mean, s.win_rate, s.std),
            ([30.0, 30.0], 60.0, 0.5, [0.0, 0.0])
        );
    }

    #[test]
    fn defector_beats_cooperator() {
        let t =
            [run_episode(EnvId::Ipd, &ConstantPolicy(1), &ConstantPolicy(0), 20, 0, 0).unwrap()];
        let s = episode_returns(&t).unwrap();
        assert_eq!((s.mean, s.win_rate), ([50.0, 0.0], 1.0));
    }

    #[test]
    fn rejects_mixed_and_empty() {
        let a = run_episode(EnvId::Ipd, &ConstantPolicy(0), &ConstantPolicy(0), 20, 0, 0).unwrap();
        let b = run_episode(
            EnvId::Predatorprey,
            &ConstantPolicy(0),
            &ConstantPolicy(0),
            4,
            0,
            0,
        )
        .unwrap();
        assert!(episode_returns(&[a, b]).is_err());
        assert!(episode_returns(&[]).is_err());
    }
}
