use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    dis_jsd, empirical_occupancy, episode_returns, position_kld, tv_distance, EvalError,
    PositionKld, ReturnStats, DEFAULT_GAMMA,
};
use crate::demos::DemoDataset;
use crate::games::{run_episode, EnvId, Policy, Trajectory};
use crate::seeds;

pub const DEFAULT_EVAL_EPISODES: usize = 200;

/// Absolute differences between learned and demonstrated returns.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub leader: f64,
    pub follower: f64,
    pub total: f64,
    pub win_rate: f64,
}

impl GapSummary {
    fn between(learned: &ReturnStats, demo: &ReturnStats) -> Self {
        Self {
            leader: (learned.mean[0] - demo.mean[0]).abs(),
            follower: (learned.mean[1] - demo.mean[1]).abs(),
            total: (learned.total_mean - demo.total_mean).abs(),
            win_rate: (learned.win_rate - demo.win_rate).abs(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReturn {
    pub episode: usize,
    pub seed: u64,
    pub leader: f64,
    pub follower: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub env: EnvId,
    pub label: String,
    pub episodes: usize,
    pub master_seed: u64,
    pub demo_master_seed: u64,
    pub learned: ReturnStats,
    pub demo: ReturnStats,
    pub gaps: GapSummary,
    pub dis_jsd: Option<f64>,
    pub position_kld: Option<PositionKld>,
    /// TV between empirical occupancies of learned and demo episodes.
    pub occupancy_tv: Option<f64>,
    pub returns: Vec<EpisodeReturn>,
}

fn push(out: &mut String, key: &str, value: impl std::fmt::Display) {
    writeln!(out, "{key} = {value}").expect("string write");
}

impl MetricsReport {
    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        push(&mut out, "env", self.env);
        push(&mut out, "label", &self.label);
        push(&mut out, "episodes", self.episodes);
        push(&mut out, "master_seed", self.master_seed);
        push(&mut out, "demo_master_seed", self.demo_master_seed);
        for (name, s) in [("learned", &self.learned), ("demo", &self.demo)] {
            push(&mut out, &format!("{name}.leader_mean"), s.mean[0]);
            push(&mut out, &format!("{name}.leader_std"), s.std[0]);
            push(&mut out, &format!("{name}.follower_mean"), s.mean[1]);
            push(&mut out, &format!("{name}.follower_std"), s.std[1]);
            push(&mut out, &format!("{name}.total_mean"), s.total_mean);
            push(&mut out, &format!("{name}.total_std"), s.total_std);
            push(&mut out, &format!("{name}.win_rate"), s.win_rate);
        }
        push(&mut out, "gap.leader", self.gaps.leader);
        push(&mut out, "gap.follower", self.gaps.follower);
        push(&mut out, "gap.total", self.gaps.total);
        push(&mut out, "gap.win_rate", self.gaps.win_rate);
        if let Some(j) = self.dis_jsd {
            push(&mut out, "dis_jsd", j);
        }
        if let Some(k) = &self.position_kld {
            for (name, (a, b)) in [
                ("leader", k.per_agent[0]),
                ("follower", k.per_agent[1]),
                ("pooled", k.pooled),
            ] {
                push(&mut out, &format!("position_kld.{name}.learned_vs_demo"), a);
                push(&mut out, &format!("position_kld.{name}.demo_vs_learned"), b);
            }
        }
        if let Some(tv) = self.occupancy_tv {
            push(&mut out, "occupancy_tv", tv);
        }
        let seeds: Vec<String> = self.returns.iter().map(|r| r.seed.to_string()).collect();
        push(&mut out, "eval_seeds", seeds.join(","));
        out
    }

    /// Per-episode returns as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,seed,leader,follower,total\n");
        for r in &self.returns {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.episode,
                r.seed,
                r.leader,
                r.follower,
                r.leader + r.follower
            )
            .expect("string write");
        }
        out
    }
}

/// Plays `n` evaluation episodes with the learned policies and compares
/// them with the demonstrations.
pub fn metrics_report(
    label: &str,
    leader: &dyn Policy,
    follower: &dyn Policy,
    demos: &DemoDataset,
    n: usize,
    master_seed: u64,
) -> Result<(MetricsReport, Vec<Trajectory>), EvalError> {
    let env = demos.meta.env;
    if n == 0 {
        return Err(EvalError::Argument(
            "need at least one evaluation episode".into(),
        ));
    }
    if master_seed == demos.meta.master_seed {
        return Err(EvalError::SeedOverlap(format!(
            "evaluation master seed {master_seed} is the demonstration master seed"
        )));
    }
    let demo_seeds: HashSet<u64> = demos.meta.episode_seeds.iter().copied().collect();
    let eval_seeds: Vec<u64> = (0..n as u64)
        .map(|i| seeds::derive(master_seed, i))
        .collect();
    if let Some(s) = eval_seeds.iter().find(|s| demo_seeds.contains(s)) {
        return Err(EvalError::SeedOverlap(format!(
            "evaluation episode seed {s} also generated a demonstration"
        )));
    }
    let learned: Vec<Trajectory> = eval_seeds
        .iter()
        .enumerate()
        .map(|(i, &s)| run_episode(env, leader, follower, env.horizon(), i, s))
        .collect::<Result<_, _>>()?;
    let learned_stats = episode_returns(&learned)?;
    let demo_stats = episode_returns(&demos.trajectories)?;
    let (dis, pos, tv) = if env.is_tabular() {
        let tv = tv_distance(
            &empirical_occupancy(&learned, DEFAULT_GAMMA)?,
            &empirical_occupancy(&demos.trajectories, DEFAULT_GAMMA)?,
        )?;
        (None, None, Some(tv))
    } else {
        (
            Some(dis_jsd(&demos.trajectories, &learned)?),
            Some(position_kld(&demos.trajectories, &learned)?),
            None,
        )
    };
    let returns = learned
        .iter()
        .map(|t| {
            let r = t.returns();
            EpisodeReturn {
                episode: t.episode,
                seed: t.seed,
                leader: r[0],
                follower: r[1],
            }
        })
        .collect();
    let report = MetricsReport {
        env,
        label: label.to_string(),
        episodes: n,
        master_seed,
        demo_master_seed: demos.meta.master_seed,
        learned: learned_stats,
        demo: demo_stats,
        gaps: GapSummary::between(&learned_stats, &demo_stats),
        dis_jsd: dis,
        position_kld: pos,
        occupancy_tv: tv,
        returns,
    };
    Ok((report, learned))
}

/// Several runs (typically training seeds) of one setting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub env: EnvId,
    pub labels: Vec<String>,
    pub runs: usize,
    /// Mean over runs of each run's absolute gap.
    pub mean_of_gaps: GapSummary,
    /// Absolute gap between run-averaged learned and demo means.
    pub gap_of_means: GapSummary,
    pub total_gaps: Vec<f64>,
    pub dis_jsd: Option<f64>,
    pub occupancy_tv: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn aggregate_reports(reports: &[MetricsReport]) -> Result<AggregateReport, EvalError> {
    let first = reports
        .first()
        .ok_or_else(|| EvalError::Argument("no reports to merge".into()))?;
    if let Some(r) = reports.iter().find(|r| r.env != first.env) {
        return Err(EvalError::Argument(format!(
            "mixed environments: {} and {}",
            first.env, r.env
        )));
    }
    let avg = |f: &dyn Fn(&MetricsReport) -> f64| mean(reports.iter().map(f));
    let mean_of_gaps = GapSummary {
        leader: avg(&|r| r.gaps.leader),
        follower: avg(&|r| r.gaps.follower),
        total: avg(&|r| r.gaps.total),
        win_rate: avg(&|r| r.gaps.win_rate),
    };
    let gap_of_means = GapSummary {
        leader: (avg(&|r| r.learned.mean[0]) - avg(&|r| r.demo.mean[0])).abs(),
        follower: (avg(&|r| r.learned.mean[1]) - avg(&|r| r.demo.mean[1])).abs(),
        total: (avg(&|r| r.learned.total_mean) - avg(&|r| r.demo.total_mean)).abs(),
        win_rate: (avg(&|r| r.learned.win_rate) - avg(&|r| r.demo.win_rate)).abs(),
    };
    let opt = |f: &dyn Fn(&MetricsReport) -> Option<f64>| {
        let v: Option<Vec<f64>> = reports.iter().map(f).collect();
        v.map(|v| mean(v.into_iter()))
    };
    Ok(AggregateReport {
        env: first.env,
        labels: reports.iter().map(|r| r.label.clone()).collect(),
        runs: reports.len(),
        mean_of_gaps,
        gap_of_means,
        total_gaps: reports.iter().map(|r| r.gaps.total).collect(),
        dis_jsd: opt(&|r| r.dis_jsd),
        occupancy_tv: opt(&|r| r.occupancy_tv),
    })
}

impl AggregateReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        push(&mut out, "env", self.env);
        push(&mut out, "runs", self.runs);
        push(&mut out, "labels", self.labels.join(","));
        for (name, g) in [
            ("mean_of_gaps", &self.mean_of_gaps),
            ("gap_of_means", &self.gap_of_means),
        ] {
            push(&mut out, &format!("{name}.leader"), g.leader);
            push(&mut out, &format!("{name}.follower"), g.follower);
            push(&mut out, &format!("{name}.total"), g.total);
            push(&mut out, &format!("{name}.win_rate"), g.win_rate);
        }
        let gaps: Vec<String> = self.total_gaps.iter().map(f64::to_string).collect();
        push(&mut out, "total_gaps", gaps.join(","));
        if let Some(j) = self.dis_jsd {
            push(&mut out, "dis_jsd", j);
        }
        if let Some(tv) = self.occupancy_tv {
            push(&mut out, "occupancy_tv", tv);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demos::generate_demos;
    use crate::games::ConstantPolicy;

    fn demos() -> DemoDataset {
        generate_demos(
            EnvId::Ipd,
            &ConstantPolicy(1),
            &ConstantPolicy(0),
            ("const-d", "const-c"),
            20,
            5,
        )
        .unwrap()
    }

    #[test]
    fn perfect_clone_has_zero_gaps() {
        let (r, _) = metrics_report(
            "clone",
            &ConstantPolicy(1),
            &ConstantPolicy(0),
            &demos(),
            30,
            6,
        )
        .unwrap();
        assert_eq!(r.gaps, GapSummary::default());
        assert!(r.occupancy_tv.unwrap() < 1e-12);
        assert_eq!(r.learned.win_rate, 1.0);
        assert_eq!(r.returns.len(), 30);
        assert!(r.to_csv().lines().count() == 31);
        assert!(r.to_text().contains("gap.total = 0\n"));
    }

    #[test]
    fn refuses_demo_seeds_and_is_deterministic() {
        let d = demos();
        assert!(matches!(
            metrics_report("x", &ConstantPolicy(1), &ConstantPolicy(0), &d, 10, 5),
            Err(EvalError::SeedOverlap(_))
        ));
        let mut d2 = d.clone();
        d2.meta.episode_seeds.push(seeds::derive(8, 3));
        assert!(metrics_report("x", &ConstantPolicy(1), &ConstantPolicy(0), &d2, 10, 8).is_err());
        let a = metrics_report("x", &ConstantPolicy(0), &ConstantPolicy(0), &d, 10, 9)
            .unwrap()
            .0;
        let b = metrics_report("x", &ConstantPolicy(0), &ConstantPolicy(0), &d, 10, 9)
            .unwrap()
            .0;
        assert_eq!(a, b);
        assert_eq!(a.gaps.total, 10.0);
    }

    #[test]
    fn aggregation_reports_both_conventions() {
        let d = demos();
        let a = metrics_report("a", &ConstantPolicy(0), &ConstantPolicy(0), &d, 4, 9)
            .unwrap()
            .0;
        let b = metrics_report("b", &ConstantPolicy(1), &ConstantPolicy(1), &d, 4, 10)
            .unwrap()
            .0;
        let agg = aggregate_reports(&[a, b]).unwrap();
        // Demo total 50; runs score 60 and 20.
        assert_eq!(agg.total_gaps, vec![10.0, 30.0]);
        assert_eq!(agg.mean_of_gaps.total, 20.0);
        assert_eq!(agg.gap_of_means.total, 10.0);
        assert!(aggregate_reports(&[]).is_err());
    }
}
