//! Pipeline commands behind the `lsdn` binary: demonstration generation,
//! training, evaluation, report merging and numeric property suites.

pub mod config;
mod error;
pub mod manifest;
pub mod pipeline;
pub mod suites;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use lsdn_core::games::EnvId;

pub use config::{EvalSettings, Overrides, RunConfig, Seeds, Variant};
pub use error::CliError;
pub use manifest::RunManifest;
pub use pipeline::{
    comparison, evaluate, gen_demos, read_eval_output, train, EvalOutput, Selection, TrainOptions,
    TrainOutcome,
};
pub use suites::{run_suite, SuiteOutcome, SUITES};

#[derive(Debug, Parser)]
#[command(
    name = "lsdn",
    version,
    about = "Latent SDE imitation of turn-based two-agent games"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_env)]
    pub env: Option<EnvId>,
    #[arg(long, value_enum)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed_demo: Option<u64>,
    #[arg(long)]
    pub seed_train: Option<u64>,
    #[arg(long)]
    pub seed_eval: Option<u64>,
}

fn parse_env(s: &str) -> Result<EnvId, String> {
    s.parse()
        .map_err(|e: lsdn_core::games::GameError| e.to_string())
}

impl RunArgs {
    pub fn load(&self) -> Result<RunConfig, CliError> {
        let o = Overrides {
            env: self.env,
            variant: self.variant,
            out: self.out.clone(),
            seed_demo: self.seed_demo,
            seed_train: self.seed_train,
            seed_eval: self.seed_eval,
        };
        RunConfig::load(self.config.as_deref(), &o)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the demonstration dataset.
    GenDemos {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Train the configured variant and select a checkpoint.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from the saved trainer state.
        #[arg(long)]
        resume: bool,
        /// Pause after this many iterations (resumable).
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Evaluate the selected checkpoint against the demonstrations.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        /// Evaluate the demonstrators instead of a trained model.
        #[arg(long)]
        demonstrators: bool,
    },
    /// Run a numeric property suite (or `all`).
    Check { suite: String },
    /// Merge eval outputs into one comparison table.
    Report {
        /// Eval directories or report.json files.
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        /// Write the table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the resolved configuration as TOML.
    Config {
        #[command(flatten)]
        run: RunArgs,
    },
}

/// Executes one command, printing its result to stdout.
pub fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::GenDemos { run } => {
            let cfg = run.load()?;
            let path = gen_demos(&cfg)?;
            println!("wrote {}", path.display());
        }
        Command::Train {
            run,
            resume,
            stop_after,
        } => {
            let cfg = run.load()?;
            match train(&cfg, &TrainOptions { resume, stop_after })? {
                TrainOutcome::Finished(sel) => {
                    println!(
                        "selected {} (iteration {})",
                        cfg.variant_dir().join(&sel.file).display(),
                        sel.iteration
                    )
                }
                TrainOutcome::Paused(it) => {
                    println!("paused at iteration {it}; continue with --resume")
                }
            }
        }
        Command::Eval { run, demonstrators } => {
            let cfg = run.load()?;
            let out = evaluate(&cfg, demonstrators)?;
            print!("{}", out.aggregate.to_text());
        }
        Command::Check { suite } => {
            let names: Vec<&str> = if suite == "all" {
                SUITES.to_vec()
            } else {
                vec![suite.as_str()]
            };
            let mut failed = Vec::new();
            for name in names {
                let r = run_suite(name)?;
                print!("{}", r.summary());
                if !r.passed {
                    failed.push(r.name);
                }
            }
            if !failed.is_empty() {
                return Err(CliError::SuiteFailed(failed.join(", ")));
            }
        }
        Command::Report { inputs, out } => {
            let loaded = inputs
                .iter()
                .map(|p| Ok((p.display().to_string(), read_eval_output(p)?)))
                .collect::<Result<Vec<_>, CliError>>()?;
            let table = comparison(&loaded)?;
            match out {
                Some(path) => manifest::write_file(&path, table.as_bytes())?,
                None => print!("{table}"),
            }
        }
        Command::Config { run } => print!("{}", run.load()?.to_toml()),
    }
    Ok(())
}
