use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use lsdn_core::demos::{build_demonstrators, generate_demos, DemoDataset, DemoPolicy};
use lsdn_core::eval::{
    aggregate_reports, distance_histograms, empirical_occupancy, metrics_report, AggregateReport,
    MetricsReport, DEFAULT_GAMMA,
};
use lsdn_core::games::{Policy, Trajectory};
use lsdn_core::gradcore::Checkpoint;
use lsdn_core::lsdn::{
    select_checkpoint, train_ablation, AblationModel, AblationPolicy, CheckpointSummary,
    LsdnPolicy, ModelBundle, PreparedData, Trainer,
};
use lsdn_core::seeds;
use serde::{Deserialize, Serialize};

use crate::manifest::{now_unix, RunManifest};
use crate::{CliError, RunConfig, Variant};

pub const TRAIN_LOG: &str = "train_log.jsonl";
pub const TIMING_FILE: &str = "train_timing.json";
pub const SELECTED_FILE: &str = "selected.json";
pub const STATE_FILE: &str = "trainer_state.ckpt";
pub const ABLATION_MODEL: &str = "model.ckpt";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const RETURNS_CSV: &str = "returns.csv";

/// Writes the demonstration dataset.
pub fn gen_demos(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let started = now_unix();
    let mut manifest = RunManifest::open(cfg)?;
    let (leader, follower) =
        build_demonstrators(cfg.env, cfg.leader, cfg.follower, cfg.seeds.demo)?;
    log::info!(
        "generating {} {} episodes ({} vs {})",
        cfg.episodes,
        cfg.env,
        cfg.leader.id(),
        cfg.follower.id()
    );
    let ds = generate_demos(
        cfg.env,
        &leader,
        &follower,
        (cfg.leader.id(), cfg.follower.id()),
        cfg.episodes,
        cfg.seeds.demo,
    )?;
    let path = cfg.dataset_path();
    manifest.write(&path, &ds.to_bytes())?;
    manifest.finish("gen-demos", started)?;
    Ok(path)
}

fn load_dataset(cfg: &RunConfig) -> Result<DemoDataset, CliError> {
    let path = cfg.dataset_path();
    if !path.exists() {
        return Err(CliError::Config(format!(
            "dataset {} does not exist; run gen-demos first",
            path.display()
        )));
    }
    let ds = DemoDataset::read(&path)?;
    if ds.meta.env != cfg.env {
        return Err(CliError::Config(format!(
            "dataset {} holds {} episodes, config says {}",
            path.display(),
            ds.meta.env,
            cfg.env
        )));
    }
    if ds.meta.master_seed == cfg.seeds.eval {
        return Err(CliError::Config(format!(
            "seeds.eval: equals the dataset's demo seed {}",
            ds.meta.master_seed
        )));
    }
    Ok(ds)
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrainOptions {
    /// Continue from the saved trainer state.
    pub resume: bool,
    /// Stop once this many iterations are complete, leaving a resumable state.
    pub stop_after: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub variant: Variant,
    /// Index into `checkpoints`.
    pub index: usize,
    pub iteration: usize,
    /// Model file relative to the variant directory.
    pub file: String,
    pub checkpoints: Vec<CheckpointSummary>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrainOutcome {
    Finished(Selection),
    /// Stopped early at this iteration.
    Paused(usize),
}

fn checkpoint_name(iteration: usize) -> String {
    format!("checkpoints/iter-{iteration:06}.ckpt")
}

pub fn train(cfg: &RunConfig, opts: &TrainOptions) -> Result<TrainOutcome, CliError> {
    let started = now_unix();
    let clock = Instant::now();
    let ds = load_dataset(cfg)?;
    let mut manifest = RunManifest::open(cfg)?;
    let dir = cfg.variant_dir();
    let outcome = match cfg.variant {
        Variant::Lsdn => train_lsdn(cfg, opts, &ds, &dir, &mut manifest)?,
        Variant::Ablation => {
            if opts.resume || opts.stop_after.is_some() {
                return Err(CliError::Usage(
                    "resume and stop-after apply to the lsdn variant only".into(),
                ));
            }
            train_ablation_variant(cfg, &ds, &dir, &mut manifest)?
        }
    };
    let timing =
        serde_json::json!({ "seconds": clock.elapsed().as_secs_f64(), "resumed": opts.resume });
    manifest.write(&dir.join(TIMING_FILE), timing.to_string().as_bytes())?;
    manifest.finish(&format!("train {}", cfg.variant.id()), started)?;
    Ok(outcome)
}

fn train_lsdn(
    cfg: &RunConfig,
    opts: &TrainOptions,
    ds: &DemoDataset,
    dir: &Path,
    manifest: &mut RunManifest,
) -> Result<TrainOutcome, CliError> {
    let data = PreparedData::new(cfg.env, &ds.trajectories)?;
    let state_path = dir.join(STATE_FILE);
    let mut trainer = if opts.resume {
        if !state_path.exists() {
            return Err(CliError::Usage(format!(
                "nothing to resume: {} is missing",
                state_path.display()
            )));
        }
        let t = Trainer::<f64>::restore(&Checkpoint::read(&state_path)?, data)?;
        if t.model.config != cfg.model {
            return Err(CliError::Config(
                "model: saved trainer state was created with a different model config".into(),
            ));
        }
        log::info!("resuming at iteration {}", t.iteration());
        t
    } else {
        Trainer::new(ModelBundle::<f64>::new(cfg.env, cfg.model.clone())?, data)?
    };
    while !trainer.is_done() {
        if opts.stop_after.is_some_and(|n| trainer.iteration() >= n) {
            manifest.write(&dir.join(TRAIN_LOG), trainer.history.to_jsonl().as_bytes())?;
            return Ok(TrainOutcome::Paused(trainer.iteration()));
        }
        if let Some(summary) = trainer.step()? {
            log::info!(
                "iteration {}: recon {:.3} kl {:.3} inverse ce {:.4}",
                summary.iteration,
                summary.recon_nll,
                summary.kl,
                summary.inverse_ce
            );
            manifest.write(
                &dir.join(checkpoint_name(summary.iteration)),
                &trainer.model.to_checkpoint().to_bytes(),
            )?;
            manifest.write(&state_path, &trainer.save_state().to_bytes())?;
        }
    }
    manifest.write(&dir.join(TRAIN_LOG), trainer.history.to_jsonl().as_bytes())?;
    let checkpoints = trainer.history.checkpoints.clone();
    let index = select_checkpoint(&checkpoints)?;
    let iteration = checkpoints[index].iteration;
    let selection = Selection {
        variant: Variant::Lsdn,
        index,
        iteration,
        file: checkpoint_name(iteration),
        checkpoints,
    };
    log::info!("selected checkpoint {} (iteration {iteration})", index);
    manifest.write(&dir.join(SELECTED_FILE), &selection_bytes(&selection))?;
    Ok(TrainOutcome::Finished(selection))
}

fn selection_bytes(s: &Selection) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(s).expect("selection serializes");
    v.push(b'\n');
    v
}

fn train_ablation_variant(
    cfg: &RunConfig,
    ds: &DemoDataset,
    dir: &Path,
    manifest: &mut RunManifest,
) -> Result<TrainOutcome, CliError> {
    let model = train_ablation::<f64>(cfg.env, cfg.ablation.clone(), &ds.trajectories)?;
    let mut log = String::new();
    for (agent, a) in ["leader", "follower"].iter().zip(&model.agents) {
        for (epoch, (mse, ce)) in a.losses.iter().enumerate() {
            let line = serde_json::json!({ "agent": agent, "epoch": epoch + 1, "mse": mse, "inverse_ce": ce });
            writeln!(log, "{line}").expect("string write");
        }
    }
    manifest.write(&dir.join(TRAIN_LOG), log.as_bytes())?;
    manifest.write(&dir.join(ABLATION_MODEL), &model.to_checkpoint().to_bytes())?;
    let selection = Selection {
        variant: Variant::Ablation,
        index: 0,
        iteration: cfg.ablation.epochs,
        file: ABLATION_MODEL.into(),
        checkpoints: vec![],
    };
    manifest.write(&dir.join(SELECTED_FILE), &selection_bytes(&selection))?;
    Ok(TrainOutcome::Finished(selection))
}

/// Evaluation results over every eval seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutput {
    pub reports: Vec<MetricsReport>,
    pub aggregate: AggregateReport,
}

/// One policy for both seats, or a leader and a follower.
type Seats = Vec<Box<dyn Policy>>;

fn learned_policies(cfg: &RunConfig) -> Result<Seats, CliError> {
    let dir = cfg.variant_dir();
    let sel_path = dir.join(SELECTED_FILE);
    let text = std::fs::read_to_string(&sel_path).map_err(|_| {
        CliError::Config(format!(
            "no selected checkpoint at {}; run train first",
            sel_path.display()
        ))
    })?;
    let sel: Selection = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", sel_path.display())))?;
    let ckpt = Checkpoint::<f64>::read(&dir.join(&sel.file))?;
    Ok(match cfg.variant {
        Variant::Lsdn => {
            let model = ModelBundle::from_checkpoint(&ckpt)?;
            if model.env != cfg.env {
                return Err(CliError::Config(format!(
                    "checkpoint is for {}, config says {}",
                    model.env, cfg.env
                )));
            }
            vec![Box::new(LsdnPolicy::new(model))]
        }
        Variant::Ablation => vec![Box::new(AblationPolicy(AblationModel::from_checkpoint(
            &ckpt,
        )?))],
    })
}

fn demonstrator_policies(cfg: &RunConfig) -> Result<Seats, CliError> {
    let (l, f): (DemoPolicy, DemoPolicy) =
        build_demonstrators(cfg.env, cfg.leader, cfg.follower, cfg.seeds.demo)?;
    Ok(vec![Box::new(l), Box::new(f)])
}

/// Evaluates the trained variant, or the demonstrators themselves when
/// `demonstrators` is set, and writes the report files.
pub fn evaluate(cfg: &RunConfig, demonstrators: bool) -> Result<EvalOutput, CliError> {
    let started = now_unix();
    let ds = load_dataset(cfg)?;
    let mut manifest = RunManifest::open(cfg)?;
    let seats = if demonstrators {
        demonstrator_policies(cfg)?
    } else {
        learned_policies(cfg)?
    };
    let (leader, follower) = (&seats[0], &seats[seats.len() - 1]);
    let name = if demonstrators {
        "demonstrators"
    } else {
        cfg.variant.id()
    };
    let mut reports = Vec::new();
    let mut returns = String::new();
    let mut dumps = Vec::new();
    for k in 0..cfg.eval.seeds {
        let master = seeds::derive(cfg.seeds.eval, k as u64);
        let label = format!("{name}/train-{}/eval-{k}", cfg.seeds.train);
        let (report, learned) =
            metrics_report(&label, leader, follower, &ds, cfg.eval.episodes, master)?;
        let csv = report.to_csv();
        if k == 0 {
            returns.push_str(&csv);
        } else {
            returns.extend(csv.lines().skip(1).map(|l| format!("{l}\n")));
        }
        dumps.push(histogram_dump(k, &ds.trajectories, &learned)?);
        reports.push(report);
    }
    let aggregate = aggregate_reports(&reports)?;
    let dir = if demonstrators {
        cfg.out.join("demonstrators").join("eval")
    } else {
        cfg.variant_dir().join("eval")
    };
    let out = EvalOutput { reports, aggregate };
    let mut json = serde_json::to_vec_pretty(&out).expect("report serializes");
    json.push(b'\n');
    manifest.write(&dir.join(REPORT_JSON), &json)?;
    manifest.write(&dir.join(REPORT_TEXT), eval_text(&out).as_bytes())?;
    manifest.write(&dir.join(RETURNS_CSV), returns.as_bytes())?;
    let mut hist = serde_json::to_vec_pretty(&dumps).expect("histograms serialize");
    hist.push(b'\n');
    manifest.write(&dir.join("histograms.json"), &hist)?;
    manifest.finish(&format!("eval {name}"), started)?;
    Ok(out)
}

fn eval_text(out: &EvalOutput) -> String {
    let mut s = String::from("[aggregate]\n");
    s.push_str(&out.aggregate.to_text());
    for r in &out.reports {
        let _ = writeln!(s, "\n[{}]", r.label);
        s.push_str(&r.to_text());
    }
    s
}

/// Occupancy masses for tabular environments, distance histograms otherwise.
fn histogram_dump(
    k: usize,
    demo: &[Trajectory],
    learned: &[Trajectory],
) -> Result<serde_json::Value, CliError> {
    if demo.first().is_some_and(|t| t.env.is_tabular()) {
        let d = empirical_occupancy(demo, DEFAULT_GAMMA)?.normalized();
        let l = empirical_occupancy(learned, DEFAULT_GAMMA)?.normalized();
        let keys: BTreeSet<_> = d.keys().chain(l.keys()).copied().collect();
        let rows: Vec<_> = keys
            .iter()
            .map(|key| {
                serde_json::json!({
                    "key": key,
                    "demo": d.get(key).copied().unwrap_or(0.0),
                    "learned": l.get(key).copied().unwrap_or(0.0),
                })
            })
            .collect();
        return Ok(
            serde_json::json!({ "eval": k, "kind": "occupancy", "gamma": DEFAULT_GAMMA, "rows": rows }),
        );
    }
    Ok(match distance_histograms(demo, learned)? {
        Some((d, l)) => serde_json::json!({
            "eval": k,
            "kind": "distance",
            "edges": d.edges,
            "demo": d.probabilities(),
            "learned": l.probabilities(),
        }),
        None => serde_json::json!({ "eval": k, "kind": "distance", "edges": [] }),
    })
}

/// Reads `report.json` from an eval directory (or the file itself).
pub fn read_eval_output(path: &Path) -> Result<EvalOutput, CliError> {
    let file = if path.is_dir() {
        path.join(REPORT_JSON)
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&file).map_err(|e| CliError::io(&file, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))
}

/// Merges eval outputs into one comparison table: a row per input, then a
/// row per group of inputs sharing a variant name.
pub fn comparison(inputs: &[(String, EvalOutput)]) -> Result<String, CliError> {
    if inputs.is_empty() {
        return Err(CliError::Usage(
            "report needs at least one eval output".into(),
        ));
    }
    let mut s = String::new();
    let header = format!(
        "{:<40} {:>5} {:>12} {:>12} {:>12} {:>12} {:>10} {:>10}\n",
        "run",
        "evals",
        "gap.total",
        "gap.leader",
        "gap.follower",
        "gap.winrate",
        "dis_jsd",
        "occ_tv"
    );
    s.push_str(&header);
    let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    let row = |s: &mut String, name: &str, a: &AggregateReport| {
        let g = &a.mean_of_gaps;
        let _ = writeln!(
            s,
            "{:<40} {:>5} {:>12.4} {:>12.4} {:>12.4} {:>12.4} {:>10} {:>10}",
            name,
            a.runs,
            g.total,
            g.leader,
            g.follower,
            g.win_rate,
            opt(a.dis_jsd),
            opt(a.occupancy_tv)
        );
    };
    for (name, out) in inputs {
        row(&mut s, name, &out.aggregate);
    }
    let mut groups: Vec<(String, Vec<MetricsReport>)> = Vec::new();
    for (_, out) in inputs {
        for r in &out.reports {
            let variant = r.label.split('/').next().unwrap_or("").to_string();
            match groups.iter_mut().find(|(v, _)| *v == variant) {
                Some((_, rs)) => rs.push(r.clone()),
                None => groups.push((variant, vec![r.clone()])),
            }
        }
    }
    s.push('\n');
    s.push_str(&header);
    for (variant, rs) in &groups {
        let agg = aggregate_reports(rs)?;
        row(&mut s, &format!("{variant} (all runs)"), &agg);
        let _ = writeln!(
            s,
            "{:<40} gap of means: total {:.4}",
            "", agg.gap_of_means.total
        );
    }
    Ok(s)
}
