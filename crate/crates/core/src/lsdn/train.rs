use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{elbo, ElboNoise, LsdnError, ModelBundle, ModelConfig, PreparedData};
use crate::games::{EnvId, Trajectory};
use crate::gradcore::{AdamState, Checkpoint, Graph, Scalar, Tensor};
use crate::seeds;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub recon_nll: f64,
    pub kl: f64,
    pub inverse_ce: f64,
    pub beta: f64,
    pub total: f64,
    pub anchor: f64,
}

/// Metric means over the iterations since the previous checkpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointSummary {
    /// Iterations completed when the snapshot was taken.
    pub iteration: usize,
    pub seed: u64,
    pub recon_nll: f64,
    pub kl: f64,
    pub inverse_ce: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub records: Vec<IterationRecord>,
    pub checkpoints: Vec<CheckpointSummary>,
}

impl TrainingHistory {
    /// One JSON object per iteration.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("plain record"));
            out.push('\n');
        }
        out
    }
}

/// Stateful minibatch trainer; resumable bit-for-bit through [`Trainer::save_state`].
pub struct Trainer<S> {
    pub model: ModelBundle<S>,
    pub history: TrainingHistory,
    data: PreparedData,
    adam: AdamState<S>,
    rng: ChaCha8Rng,
    last_checkpoint: usize,
}

impl<S: Scalar> Trainer<S> {
    pub fn new(model: ModelBundle<S>, data: PreparedData) -> Result<Self, LsdnError> {
        Self::check_data(&model, &data)?;
        let adam = AdamState::new(
            &model.store,
            S::lit(model.config.base_lr),
            S::lit(model.config.lr_decay),
        );
        let rng = seeds::rng(seeds::derive(model.config.seed, 0x7EA1));
        Ok(Self {
            model,
            history: TrainingHistory::default(),
            data,
            adam,
            rng,
            last_checkpoint: 0,
        })
    }

    fn check_data(model: &ModelBundle<S>, data: &PreparedData) -> Result<(), LsdnError> {
        if data.is_empty() {
            return Err(LsdnError::EmptyDataset);
        }
        if data.env != model.env {
            return Err(LsdnError::Argument(format!(
                "model is for {}, data is {}",
                model.env, data.env
            )));
        }
        Ok(())
    }

    pub fn iteration(&self) -> usize {
        self.history.records.len()
    }

    pub fn is_done(&self) -> bool {
        self.iteration() >= self.model.config.total_iterations
    }

    /// One Adam step on `-(ELBO) + anchor loss`. Returns a summary when a
    /// checkpoint boundary is reached.
    pub fn step(&mut self) -> Result<Option<CheckpointSummary>, LsdnError> {
        let iteration = self.iteration();
        let cfg = &self.model.config;
        let beta = cfg.beta(iteration);
        let n = self.data.len();
        let idx: Vec<usize> = (0..cfg.batch_size)
            .map(|_| self.rng.random_range(0..n))
            .collect();
        let noise = ElboNoise::sample(&self.model, idx.len(), &mut self.rng)?;
        let batch = self.data.batch::<S>(&idx);
        let (terms, grads) = {
            let mut g = Graph::new(&self.model.store);
            let obj = elbo(&mut g, &self.model, &batch, &noise, beta)?;
            let t = obj.terms;
            if ![t.reconstruction, t.kl, t.inverse_ce, t.anchor]
                .iter()
                .all(|v| v.is_finite())
            {
                return Err(LsdnError::NonFinite {
                    iteration,
                    recon_nll: -t.reconstruction,
                    kl: t.kl,
                    inverse_ce: t.inverse_ce,
                });
            }
            let neg = g.neg(obj.total);
            let loss = g.add(neg, obj.anchor)?;
            (t, g.backward(loss)?)
        };
        self.adam.step(&mut self.model.store, &grads)?;
        self.history.records.push(IterationRecord {
            iteration,
            recon_nll: -terms.reconstruction,
            kl: terms.kl,
            inverse_ce: terms.inverse_ce,
            beta,
            total: terms.total,
            anchor: terms.anchor,
        });
        let done = iteration + 1;
        if !done.is_multiple_of(self.model.config.checkpoint_cadence()) {
            return Ok(None);
        }
        let span = &self.history.records[self.last_checkpoint..];
        let mean =
            |f: fn(&IterationRecord) -> f64| span.iter().map(f).sum::<f64>() / span.len() as f64;
        let summary = CheckpointSummary {
            iteration: done,
            seed: self.model.config.seed,
            recon_nll: mean(|r| r.recon_nll),
            kl: mean(|r| r.kl),
            inverse_ce: mean(|r| r.inverse_ce),
        };
        self.last_checkpoint = done;
        self.history.checkpoints.push(summary);
        Ok(Some(summary))
    }

    /// Parameters, optimizer moments, RNG state and history.
    pub fn save_state(&self) -> Checkpoint<S> {
        let mut entries = self.model.store.named_entries();
        for (kind, moments) in [
            ("m", &self.adam.first_moment),
            ("v", &self.adam.second_moment),
        ] {
            for ((_, name, _), t) in self.model.store.iter().zip(moments) {
                entries.push((format!("adam.{kind}.{name}"), t.clone()));
            }
        }
        let meta = serde_json::json!({
            "model": self.model.to_checkpoint().meta,
            "adam_step": self.adam.step,
            "rng": self.rng,
            "history": self.history,
            "last_checkpoint": self.last_checkpoint,
        });
        Checkpoint::new(entries, meta)
    }

    pub fn restore(state: &Checkpoint<S>, data: PreparedData) -> Result<Self, LsdnError> {
        let field = |key: &str| {
            state
                .meta
                .get(key)
                .cloned()
                .ok_or_else(|| LsdnError::Config(format!("training state lacks {key}")))
        };
        let bad = |key: &str, e: serde_json::Error| {
            LsdnError::Config(format!("training state {key}: {e}"))
        };
        let model =
            ModelBundle::from_checkpoint(&Checkpoint::new(state.entries.clone(), field("model")?))?;
        Self::check_data(&model, &data)?;
        let mut adam = AdamState::new(
            &model.store,
            S::lit(model.config.base_lr),
            S::lit(model.config.lr_decay),
        );
        for (kind, moments) in [
            ("m", &mut adam.first_moment),
            ("v", &mut adam.second_moment),
        ] {
            for ((_, name, _), t) in model.store.iter().zip(moments.iter_mut()) {
                let key = format!("adam.{kind}.{name}");
                let saved: &Tensor<S> = state
                    .get(&key)
                    .ok_or_else(|| LsdnError::Config(format!("training state lacks {key}")))?;
                if saved.shape() != t.shape() {
                    return Err(LsdnError::Config(format!(
                        "{key}: shape {:?}, expected {:?}",
                        saved.shape(),
                        t.shape()
                    )));
                }
                *t = saved.clone();
            }
        }
        adam.step = serde_json::from_value(field("adam_step")?).map_err(|e| bad("adam_step", e))?;
        Ok(Self {
            model,
            history: serde_json::from_value(field("history")?).map_err(|e| bad("history", e))?,
            data,
            adam,
            rng: serde_json::from_value(field("rng")?).map_err(|e| bad("rng", e))?,
            last_checkpoint: serde_json::from_value(field("last_checkpoint")?)
                .map_err(|e| bad("last_checkpoint", e))?,
        })
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Index of the checkpoint whose kl and reconstruction deviate least from
/// their late-training medians, ignoring checkpoints whose inverse-dynamics
/// cross-entropy already fell below 0.5.
pub fn select_checkpoint(checkpoints: &[CheckpointSummary]) -> Result<usize, LsdnError> {
    if checkpoints.len() < 4 {
        return Err(LsdnError::Argument(format!(
            "checkpoint selection needs at least 4 checkpoints, got {}",
            checkpoints.len()
        )));
    }
    let survivors: Vec<usize> = (0..checkpoints.len())
        .filter(|&i| checkpoints[i].inverse_ce >= 0.5)
        .collect();
    if survivors.is_empty() {
        log::warn!(
            "every checkpoint has inverse-dynamics cross-entropy below 0.5; using the last one"
        );
        return Ok(checkpoints.len() - 1);
    }
    let late = &survivors[survivors.len() / 2..];
    let med_kl = median(&mut late.iter().map(|&i| checkpoints[i].kl).collect::<Vec<_>>());
    let med_rec = median(
        &mut late
            .iter()
            .map(|&i| checkpoints[i].recon_nll)
            .collect::<Vec<_>>(),
    );
    let dev = |x: f64, m: f64| (x - m).abs() / if m == 0.0 { 1.0 } else { m.abs() };
    let mut best = survivors[0];
    let mut best_score = f64::INFINITY;
    for &i in &survivors {
        let c = &checkpoints[i];
        let score = dev(c.kl, med_kl) + dev(c.recon_nll, med_rec);
        if score < best_score {
            best = i;
            best_score = score;
        }
    }
    Ok(best)
}

/// A trained model with the selected checkpoint's parameters loaded.
pub struct TrainedModel<S> {
    pub model: ModelBundle<S>,
    pub history: TrainingHistory,
    pub selected: usize,
}

/// Full training run kept in memory, followed by checkpoint selection.
pub fn train<S: Scalar>(
    env: EnvId,
    config: ModelConfig,
    demos: &[Trajectory],
) -> Result<TrainedModel<S>, LsdnError> {
    let data = PreparedData::new(env, demos)?;
    let mut trainer = Trainer::new(ModelBundle::new(env, config)?, data)?;
    let mut snapshots = Vec::new();
    while !trainer.is_done() {
        if trainer.step()?.is_some() {
            snapshots.push(trainer.model.store.named_entries());
        }
    }
    let Trainer {
        mut model, history, ..
    } = trainer;
    let selected = select_checkpoint(&history.checkpoints)?;
    model.store.load_named(&snapshots[selected])?;
    Ok(TrainedModel {
        model,
        history,
        selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::games::{run_episode, ConstantPolicy};
    use proptest::prelude::*;

    fn summary(i: usize, kl: f64, rec: f64, ce: f64) -> CheckpointSummary {
        CheckpointSummary {
            iteration: i,
            seed: 0,
            recon_nll: rec,
            kl,
            inverse_ce: ce,
        }
    }

    #[test]
    fn selection_single_survivor() {
        let cs = [
            summary(1, 1.0, 1.0, 0.1),
            summary(2, 5.0, 3.0, 0.9),
            summary(3, 1.0, 1.0, 0.2),
            summary(4, 1.0, 1.0, 0.3),
        ];
        assert_eq!(select_checkpoint(&cs).unwrap(), 1);
    }

    #[test]
    fn selection_median_point_wins() {
        let cs = [
            summary(1, 9.0, 9.0, 2.0),
            summary(2, 3.0, 4.0, 1.0),
            summary(3, 2.0, 5.0, 1.0),
            summary(4, 3.0, 5.0, 1.0),
            summary(5, 4.0, 6.0, 1.0),
        ];
        // Latter half: checkpoints 2..5 -> medians kl 3.0, rec 5.0.
        assert_eq!(select_checkpoint(&cs).unwrap(), 3);
    }

    #[test]
    fn selection_fallback_and_errors() {
        let low = [summary(1, 1.0, 1.0, 0.1); 4];
        assert_eq!(select_checkpoint(&low).unwrap(), 3);
        assert!(select_checkpoint(&low[..3]).is_err());
    }

    // Oracle: brute force over every survivor with medians taken by counting.
    fn oracle(cs: &[CheckpointSummary]) -> usize {
        let surv: Vec<usize> = (0..cs.len()).filter(|&i| cs[i].inverse_ce >= 0.5).collect();
        if surv.is_empty() {
            return cs.len() - 1;
        }
        let late: Vec<usize> = surv.iter().copied().skip(surv.len() / 2).collect();
        let med = |f: &dyn Fn(&CheckpointSummary) -> f64| {
            let xs: Vec<f64> = late.iter().map(|&i| f(&cs[i])).collect();
            // Values with at most half strictly below and at most half strictly above.
            let k = xs.len();
            let mids: Vec<f64> = xs
                .iter()
                .copied()
                .filter(|&x| {
                    2 * xs.iter().filter(|&&y| y < x).count() <= k
                        && 2 * xs.iter().filter(|&&y| y > x).count() <= k
                })
                .collect();
            let lo = mids.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = mids.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (lo + hi) / 2.0
        };
        let (mk, mr) = (med(&|c| c.kl), med(&|c| c.recon_nll));
        let norm = |m: f64| if m == 0.0 { 1.0 } else { m.abs() };
        let scores: Vec<f64> = surv
            .iter()
            .map(|&i| (cs[i].kl - mk).abs() / norm(mk) + (cs[i].recon_nll - mr).abs() / norm(mr))
            .collect();
        let best = scores.iter().copied().fold(f64::INFINITY, f64::min);
        surv[scores.iter().position(|&s| s == best).unwrap()]
    }

    proptest! {
        #[test]
        fn selection_matches_oracle(points in prop::collection::vec((0u8..20, 0u8..20, 0u8..10), 10)) {
            let cs: Vec<CheckpointSummary> = points
                .iter()
                .enumerate()
                .map(|(i, &(k, r, c))| summary(i, k as f64 * 0.5, 10.0 - r as f64, c as f64 * 0.1))
                .collect();
            prop_assert_eq!(select_checkpoint(&cs).unwrap(), oracle(&cs));
        }
    }

    fn tiny() -> (ModelConfig, PreparedData) {
        let cfg = ModelConfig {
            total_iterations: 20,
            kl_anneal_iterations: 10,
            batch_size: 4,
            checkpoint_every: 5,
            seed: 11,
            ..ModelConfig::ipd()
        };
        let trajs: Vec<_> = (0..6)
            .map(|i| {
                run_episode(
                    EnvId::Ipd,
                    &ConstantPolicy(i % 2),
                    &ConstantPolicy(1),
                    20,
                    i,
                    i as u64,
                )
                .unwrap()
            })
            .collect();
        (cfg, PreparedData::new(EnvId::Ipd, &trajs).unwrap())
    }

    #[test]
    fn resume_matches_uninterrupted_run() {
        let (cfg, data) = tiny();
        let mut straight = Trainer::<f64>::new(
            ModelBundle::new(EnvId::Ipd, cfg.clone()).unwrap(),
            data.clone(),
        )
        .unwrap();
        while !straight.is_done() {
            straight.step().unwrap();
        }
        let mut first =
            Trainer::<f64>::new(ModelBundle::new(EnvId::Ipd, cfg).unwrap(), data.clone()).unwrap();
        for _ in 0..10 {
            first.step().unwrap();
        }
        let bytes = first.save_state().to_bytes();
        let mut resumed =
            Trainer::<f64>::restore(&Checkpoint::from_bytes(&bytes).unwrap(), data).unwrap();
        while !resumed.is_done() {
            resumed.step().unwrap();
        }
        assert_eq!(resumed.history, straight.history);
        assert_eq!(
            resumed.model.store.named_entries(),
            straight.model.store.named_entries()
        );
        assert_eq!(straight.history.checkpoints.len(), 4);
    }

    #[test]
    fn logged_terms_are_consistent() {
        let (cfg, data) = tiny();
        let mut t = Trainer::<f64>::new(ModelBundle::new(EnvId::Ipd, cfg).unwrap(), data).unwrap();
        while !t.is_done() {
            t.step().unwrap();
        }
        for (i, r) in t.history.records.iter().enumerate() {
            assert_eq!(r.iteration, i);
            assert_eq!(r.beta, t.model.config.beta(i));
            assert_eq!(r.total, -r.recon_nll - r.beta * r.kl - r.inverse_ce);
        }
        let c = t.history.checkpoints[1];
        let mean = t.history.records[5..10].iter().map(|r| r.kl).sum::<f64>() / 5.0;
        assert_eq!((c.iteration, c.kl), (10, mean));
    }
}
