use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{EnvId, GameError};
use crate::Turn;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub step: usize,
    pub actor: Turn,
    pub state: Vec<f64>,
    pub action: usize,
    /// `[leader, follower]`.
    pub reward: [f64; 2],
    pub next_state: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub episode: usize,
    pub seed: u64,
    pub env: EnvId,
    pub records: Vec<TransitionRecord>,
}

impl Trajectory {
    /// Undiscounted `[leader, follower]` episode return.
    pub fn returns(&self) -> [f64; 2] {
        self.records.iter().fold([0.0, 0.0], |acc, r| {
            [acc[0] + r.reward[0], acc[1] + r.reward[1]]
        })
    }

    /// `s_0, s_1, ..., s_H`.
    pub fn states(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.records.iter().map(|r| r.state.as_slice()).collect();
        if let Some(last) = self.records.last() {
            out.push(&last.next_state);
        }
        out
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Checks alternation, contiguity and state chaining.
    pub fn validate(&self) -> Result<(), GameError> {
        for (k, r) in self.records.iter().enumerate() {
            if r.step != k || r.actor != Turn::of_step(k) {
                return Err(GameError::Protocol(format!(
                    "episode {}: record {k} has step {} actor {}",
                    self.episode, r.step, r.actor
                )));
            }
            let (next, reward) = self.env.step(&r.state, r.action, k)?;
            if next != r.next_state || reward != r.reward {
                return Err(GameError::Protocol(format!(
                    "episode {}: record {k} disagrees with the environment",
                    self.episode
                )));
            }
        }
        for w in self.records.windows(2) {
            if w[0].next_state != w[1].state {
                return Err(GameError::Protocol(format!(
                    "episode {}: broken state chain at step {}",
                    self.episode, w[1].step
                )));
            }
        }
        Ok(())
    }
}

/// One serialized transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordLine {
    pub episode: usize,
    pub step: usize,
    pub actor: Turn,
    pub state: Vec<f64>,
    pub action: usize,
    pub reward_leader: f64,
    pub reward_follower: f64,
    pub next_state: Vec<f64>,
}

pub fn write_jsonl<W: Write>(out: &mut W, trajectories: &[Trajectory]) -> std::io::Result<()> {
    for t in trajectories {
        for r in &t.records {
            let line = RecordLine {
                episode: t.episode,
                step: r.step,
                actor: r.actor,
                state: r.state.clone(),
                action: r.action,
                reward_leader: r.reward[0],
                reward_follower: r.reward[1],
                next_state: r.next_state.clone(),
            };
            serde_json::to_writer(&mut *out, &line)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

/// Groups consecutive lines by episode id. Seeds are left at zero.
pub fn read_jsonl<R: BufRead>(input: R, env: EnvId) -> Result<Vec<Trajectory>, GameError> {
    let mut out: Vec<Trajectory> = Vec::new();
    for (n, line) in input.lines().enumerate() {
        let line = line.map_err(|e| GameError::Parse(format!("line {}: {e}", n + 1)))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: RecordLine = serde_json::from_str(&line)
            .map_err(|e| GameError::Parse(format!("line {}: {e}", n + 1)))?;
        let record = TransitionRecord {
            step: rec.step,
            actor: rec.actor,
            state: rec.state,
            action: rec.action,
            reward: [rec.reward_leader, rec.reward_follower],
            next_state: rec.next_state,
        };
        match out.last_mut() {
            Some(t) if t.episode == rec.episode => t.records.push(record),
            _ => out.push(Trajectory {
                episode: rec.episode,
                seed: 0,
                env,
                records: vec![record],
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{run_episode, ConstantPolicy};

    #[test]
    fn jsonl_roundtrip() {
        let trajs: Vec<Trajectory> = (0..3)
            .map(|i| {
                run_episode(
                    EnvId::Keepaway,
                    &ConstantPolicy(i),
                    &ConstantPolicy(4 - i),
                    68,
                    i,
                    i as u64,
                )
                .unwrap()
            })
            .map(|mut t| {
                t.seed = 0;
                t
            })
            .collect();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &trajs).unwrap();
        let back = read_jsonl(buf.as_slice(), EnvId::Keepaway).unwrap();
        assert_eq!(back, trajs);
        for t in &back {
            t.validate().unwrap();
        }
    }

    #[test]
    fn validate_catches_tampering() {
        let mut t =
            run_episode(EnvId::Ipd, &ConstantPolicy(0), &ConstantPolicy(1), 20, 0, 0).unwrap();
        t.validate().unwrap();
        t.records[3].reward = [9.0, 9.0];
        assert!(t.validate().is_err());
    }
}
