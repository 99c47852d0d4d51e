use std::path::Path;
use std::process::Command;

use lsdn_cli::{
    comparison, evaluate, gen_demos, read_eval_output, train, CliError, Overrides, RunConfig,
    RunManifest, TrainOptions, TrainOutcome, Variant,
};
use lsdn_core::demos::Demonstrator;

fn small(out: &Path) -> RunConfig {
    let text = format!(
        r#"
env = "ipd"
follower = "tft-imp"
episodes = 12
out = "{}"

[model]
total_iterations = 40
kl_anneal_iterations = 10
batch_size = 4
checkpoint_every = 5

[ablation]
epochs = 3

[eval]
episodes = 15
seeds = 2
"#,
        out.display()
    );
    RunConfig::from_toml_str(&text, &Overrides::default()).unwrap()
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn lsdn_pipeline_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    let ds = gen_demos(&cfg).unwrap();
    assert!(ds.ends_with("demos.jsonl"));
    let TrainOutcome::Finished(sel) = train(&cfg, &TrainOptions::default()).unwrap() else {
        panic!("not finished")
    };
    assert_eq!(sel.checkpoints.len(), 8);
    assert!(dir.path().join("lsdn").join(&sel.file).exists());
    let log = String::from_utf8(read(&dir.path().join("lsdn/train_log.jsonl"))).unwrap();
    assert_eq!(log.lines().count(), 40);
    let out = evaluate(&cfg, false).unwrap();
    assert_eq!(out.reports.len(), 2);
    assert_eq!(out.aggregate.runs, 2);
    assert!(out
        .reports
        .iter()
        .all(|r| r.occupancy_tv.is_some() && r.episodes == 15));
    for f in [
        "report.json",
        "report.txt",
        "returns.csv",
        "histograms.json",
    ] {
        assert!(dir.path().join("lsdn/eval").join(f).exists(), "{f}");
    }
    let csv = String::from_utf8(read(&dir.path().join("lsdn/eval/returns.csv"))).unwrap();
    assert_eq!(csv.lines().count(), 1 + 30);

    let manifest = RunManifest::open(&cfg).unwrap();
    assert!(manifest.verify().is_empty());
    for f in [
        "demos.jsonl",
        "lsdn/train_log.jsonl",
        "lsdn/selected.json",
        "lsdn/eval/report.json",
        "lsdn/checkpoints/iter-000040.ckpt",
    ] {
        assert!(manifest.files.contains_key(f), "{f} missing from manifest");
    }
    let commands: Vec<&str> = manifest
        .commands
        .iter()
        .map(|c| c.command.as_str())
        .collect();
    assert_eq!(commands, ["gen-demos", "train lsdn", "eval lsdn"]);
}

#[test]
fn rerun_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [a.path(), b.path()] {
        let cfg = small(d);
        gen_demos(&cfg).unwrap();
        train(&cfg, &TrainOptions::default()).unwrap();
        evaluate(&cfg, false).unwrap();
    }
    for f in [
        "demos.jsonl",
        "lsdn/train_log.jsonl",
        "lsdn/selected.json",
        "lsdn/eval/report.json",
        "lsdn/eval/returns.csv",
    ] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
}

#[test]
fn resume_continues_the_same_stream() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let straight = small(a.path());
    gen_demos(&straight).unwrap();
    train(&straight, &TrainOptions::default()).unwrap();

    let split = small(b.path());
    gen_demos(&split).unwrap();
    let paused = train(
        &split,
        &TrainOptions {
            resume: false,
            stop_after: Some(15),
        },
    )
    .unwrap();
    assert_eq!(paused, TrainOutcome::Paused(15));
    train(
        &split,
        &TrainOptions {
            resume: true,
            stop_after: None,
        },
    )
    .unwrap();
    for f in [
        "lsdn/train_log.jsonl",
        "lsdn/selected.json",
        "lsdn/checkpoints/iter-000040.ckpt",
        "lsdn/checkpoints/iter-000010.ckpt",
    ] {
        assert_eq!(read(&a.path().join(f)), read(&b.path().join(f)), "{f}");
    }
}

#[test]
fn resume_without_state_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(dir.path());
    gen_demos(&cfg).unwrap();
    let err = train(
        &cfg,
        &TrainOptions {
            resume: true,
            stop_after: None,
        },
    )
    .unwrap_err();
    assert!(matches!(err, CliError::Usage(_)), "{err}");
}

#[test]
fn ablation_variant_and_report_merge() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    gen_demos(&cfg).unwrap();
    train(&cfg, &TrainOptions::default()).unwrap();
    evaluate(&cfg, false).unwrap();
    cfg.variant = Variant::Ablation;
    let TrainOutcome::Finished(sel) = train(&cfg, &TrainOptions::default()).unwrap() else {
        panic!("not finished")
    };
    assert_eq!(sel.file, "model.ckpt");
    let log = String::from_utf8(read(&dir.path().join("ablation/train_log.jsonl"))).unwrap();
    assert_eq!(log.lines().count(), 2 * 3);
    evaluate(&cfg, false).unwrap();

    let inputs: Vec<_> = ["lsdn/eval", "ablation/eval"]
        .iter()
        .map(|d| {
            (
                d.to_string(),
                read_eval_output(&dir.path().join(d)).unwrap(),
            )
        })
        .collect();
    let table = comparison(&inputs).unwrap();
    assert!(
        table.contains("lsdn/eval")
            && table.contains("ablation (all runs)")
            && table.contains("lsdn (all runs)")
    );
}

#[test]
fn deterministic_demonstrators_evaluate_to_zero_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small(dir.path());
    cfg.follower = Demonstrator::TftDef;
    gen_demos(&cfg).unwrap();
    let out = evaluate(&cfg, true).unwrap();
    assert_eq!(out.aggregate.mean_of_gaps.total, 0.0);
    assert!(out.aggregate.occupancy_tv.unwrap() < 1e-12);
}

#[test]
fn eval_seed_equal_to_demo_seed_is_refused_before_work() {
    let dir = tempfile::tempdir().unwrap();
    let o = Overrides {
        out: Some(dir.path().to_path_buf()),
        seed_demo: Some(5),
        seed_eval: Some(5),
        ..Default::default()
    };
    let err = RunConfig::from_toml_str("", &o).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(err.to_string().contains("seeds.eval"));
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn train_without_dataset_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let err = train(&small(dir.path()), &TrainOptions::default()).unwrap_err();
    assert!(
        err.to_string().contains("demos.jsonl") && err.exit_code() == 1,
        "{err}"
    );
}

fn lsdn() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lsdn"))
}

#[test]
fn binary_exit_codes() {
    let ok = lsdn().args(["check", "kl"]).output().unwrap();
    assert_eq!(ok.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&ok.stdout).contains("kl: PASS"));

    assert_eq!(
        lsdn()
            .args(["check", "nonsense"])
            .output()
            .unwrap()
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        lsdn()
            .args(["train", "--variant", "both"])
            .output()
            .unwrap()
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        lsdn()
            .args(["config", "--seed-demo", "3", "--seed-eval", "3"])
            .output()
            .unwrap()
            .status
            .code(),
        Some(1)
    );

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[model]\nlatent_dim = 0\n").unwrap();
    let out = lsdn()
        .args(["config", "--config"])
        .arg(&bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("latent_dim"));
}

#[test]
fn binary_prints_resolved_config_with_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.toml");
    std::fs::write(&file, "[seeds]\ntrain = 4\n").unwrap();
    let out = lsdn()
        .args([
            "config",
            "--env",
            "predatorprey",
            "--seed-train",
            "11",
            "--config",
        ])
        .arg(&file)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let cfg = RunConfig::from_toml_str(
        &String::from_utf8(out.stdout).unwrap(),
        &Overrides::default(),
    )
    .unwrap();
    assert_eq!((cfg.seeds.train, cfg.model.seed), (11, 11));
    assert_eq!(cfg.leader, Demonstrator::Chaser);
}
