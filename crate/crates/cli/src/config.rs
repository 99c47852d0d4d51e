use std::path::{Path, PathBuf};

use lsdn_core::demos::{Demonstrator, DEFAULT_EPISODES};
use lsdn_core::eval::DEFAULT_EVAL_EPISODES;
use lsdn_core::games::EnvId;
use lsdn_core::lsdn::{AblationConfig, ModelConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_EVAL_SEEDS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Lsdn,
    Ablation,
}

impl Variant {
    pub fn id(self) -> &'static str {
        match self {
            Variant::Lsdn => "lsdn",
            Variant::Ablation => "ablation",
        }
    }
}

/// Master seeds for demonstration, training and evaluation streams.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub demo: u64,
    pub train: u64,
    pub eval: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            demo: 7,
            train: 1,
            eval: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSettings {
    /// Episodes per evaluation seed.
    pub episodes: usize,
    /// Number of evaluation seeds derived from the eval master seed.
    pub seeds: usize,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            episodes: DEFAULT_EVAL_EPISODES,
            seeds: DEFAULT_EVAL_SEEDS,
        }
    }
}

/// Everything one pipeline run needs. Loaded from TOML on top of the
/// environment's defaults; command line flags win over file values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: EnvId,
    pub leader: Demonstrator,
    pub follower: Demonstrator,
    /// Demonstration episodes.
    pub episodes: usize,
    pub variant: Variant,
    pub out: PathBuf,
    /// Dataset file; `<out>/demos.jsonl` when absent.
    pub dataset: Option<PathBuf>,
    pub seeds: Seeds,
    pub model: ModelConfig,
    pub ablation: AblationConfig,
    pub eval: EvalSettings,
}

/// Command line values that replace config file entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub env: Option<EnvId>,
    pub variant: Option<Variant>,
    pub out: Option<PathBuf>,
    pub seed_demo: Option<u64>,
    pub seed_train: Option<u64>,
    pub seed_eval: Option<u64>,
}

impl RunConfig {
    pub fn defaults(env: EnvId) -> Self {
        let (leader, follower) = Demonstrator::defaults(env);
        let model = match env {
            EnvId::Ipd => ModelConfig::ipd(),
            EnvId::Predatorprey | EnvId::Keepaway => ModelConfig::mpe_desk(),
        };
        let ablation = match env {
            EnvId::Ipd => AblationConfig::default(),
            EnvId::Predatorprey | EnvId::Keepaway => AblationConfig {
                greedy: model.greedy,
                ..AblationConfig::default()
            },
        };
        let mut cfg = Self {
            env,
            leader,
            follower,
            episodes: DEFAULT_EPISODES,
            variant: Variant::Lsdn,
            out: PathBuf::from("runs").join(env.to_string()),
            dataset: None,
            seeds: Seeds::default(),
            model,
            ablation,
            eval: EvalSettings::default(),
        };
        cfg.sync_seeds();
        cfg
    }

    /// Environment defaults, then `file`, then `overrides`.
    pub fn load(file: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
                text.parse::<toml::Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => toml::Table::new(),
        };
        Self::from_table(table, overrides)
    }

    pub fn from_toml_str(text: &str, overrides: &Overrides) -> Result<Self, CliError> {
        let table = text
            .parse::<toml::Table>()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Self::from_table(table, overrides)
    }

    fn from_table(table: toml::Table, overrides: &Overrides) -> Result<Self, CliError> {
        let env = match (overrides.env, table.get("env")) {
            (Some(env), _) => env,
            (None, Some(v)) => v
                .as_str()
                .ok_or_else(|| CliError::Config("env: expected a string".into()))?
                .parse()
                .map_err(|e| CliError::Config(format!("env: {e}")))?,
            (None, None) => EnvId::Ipd,
        };
        let base = toml::Value::try_from(Self::defaults(env))
            .map_err(|e| CliError::Config(format!("defaults: {e}")))?;
        let mut merged = base;
        merge(&mut merged, toml::Value::Table(table), "")?;
        let mut cfg: RunConfig = merged
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
        cfg.env = env;
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.variant {
            self.variant = v;
        }
        if let Some(out) = &o.out {
            self.out = out.clone();
        }
        if let Some(s) = o.seed_demo {
            self.seeds.demo = s;
        }
        if let Some(s) = o.seed_train {
            self.seeds.train = s;
        }
        if let Some(s) = o.seed_eval {
            self.seeds.eval = s;
        }
        self.sync_seeds();
    }

    fn sync_seeds(&mut self) {
        self.model.seed = self.seeds.train;
        self.ablation.seed = self.seeds.train;
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let s = self.seeds;
        if s.demo == s.eval {
            return Err(CliError::Config(format!(
                "seeds.eval: must differ from seeds.demo (both {})",
                s.demo
            )));
        }
        if s.demo == s.train || s.train == s.eval {
            return Err(CliError::Config(format!(
                "seeds: demo, train and eval must be pairwise distinct, got {}/{}/{}",
                s.demo, s.train, s.eval
            )));
        }
        if self.episodes == 0 {
            return Err(CliError::Config("episodes: must be positive".into()));
        }
        if self.eval.episodes == 0 || self.eval.seeds == 0 {
            return Err(CliError::Config(
                "eval.episodes/eval.seeds: must be positive".into(),
            ));
        }
        if self.ablation.epochs == 0 || self.ablation.batch_size == 0 || self.ablation.hidden == 0 {
            return Err(CliError::Config(
                "ablation.epochs/batch_size/hidden: must be positive".into(),
            ));
        }
        self.model.validate().map_err(|e| {
            CliError::Config(format!(
                "model.{}",
                e.to_string().trim_start_matches("configuration error: ")
            ))
        })?;
        Ok(())
    }

    pub fn dataset_path(&self) -> PathBuf {
        self.dataset
            .clone()
            .unwrap_or_else(|| self.out.join("demos.jsonl"))
    }

    pub fn variant_dir(&self) -> PathBuf {
        self.out.join(self.variant.id())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Overlays `patch` on `base`, rejecting keys the defaults do not have.
fn merge(base: &mut toml::Value, patch: toml::Value, at: &str) -> Result<(), CliError> {
    match (base, patch) {
        (toml::Value::Table(b), toml::Value::Table(p)) => {
            for (k, v) in p {
                let path = if at.is_empty() {
                    k.clone()
                } else {
                    format!("{at}.{k}")
                };
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v, &path)?,
                    None if k == "dataset" => {
                        b.insert(k, v);
                    }
                    None => return Err(CliError::Config(format!("{path}: unknown field"))),
                }
            }
            Ok(())
        }
        (slot, v) => {
            if std::mem::discriminant(slot) != std::mem::discriminant(&v)
                && !(slot.is_float() && v.is_integer())
            {
                return Err(CliError::Config(format!(
                    "{at}: expected {}, found {}",
                    slot.type_str(),
                    v.type_str()
                )));
            }
            *slot = match (slot.is_float(), v) {
                (true, toml::Value::Integer(i)) => toml::Value::Float(i as f64),
                (_, v) => v,
            };
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_environment() {
        let ipd = RunConfig::defaults(EnvId::Ipd);
        assert_eq!(ipd.model.total_iterations, 1000);
        assert_eq!(
            (ipd.leader, ipd.follower),
            (Demonstrator::Q, Demonstrator::TftDef)
        );
        let pp = RunConfig::defaults(EnvId::Predatorprey);
        assert_eq!(
            (pp.leader, pp.follower),
            (Demonstrator::Chaser, Demonstrator::Evader)
        );
        assert_eq!(
            pp.model,
            ModelConfig {
                seed: 1,
                ..ModelConfig::mpe_desk()
            }
        );
    }

    #[test]
    fn file_values_then_flags() {
        let text = "env = \"ipd\"\nfollower = \"tft-imp\"\n[seeds]\ntrain = 5\n[model]\ntotal_iterations = 50\nkl_anneal_iterations = 10\nbase_lr = 1\n";
        let o = Overrides {
            seed_train: Some(9),
            ..Default::default()
        };
        let cfg = RunConfig::from_toml_str(text, &o).unwrap();
        assert_eq!(cfg.follower, Demonstrator::TftImp);
        assert_eq!(cfg.model.total_iterations, 50);
        assert_eq!(cfg.model.base_lr, 1.0);
        assert_eq!(
            (cfg.seeds.train, cfg.model.seed, cfg.ablation.seed),
            (9, 9, 9)
        );
    }

    #[test]
    fn env_flag_selects_the_preset() {
        let o = Overrides {
            env: Some(EnvId::Predatorprey),
            ..Default::default()
        };
        let cfg = RunConfig::from_toml_str("", &o).unwrap();
        assert_eq!(cfg.model.latent_dim, ModelConfig::mpe_desk().latent_dim);
    }

    #[test]
    fn errors_name_the_field() {
        let err = |t: &str| {
            RunConfig::from_toml_str(t, &Overrides::default())
                .unwrap_err()
                .to_string()
        };
        assert!(err("[model]\nlatent_dimm = 3\n").contains("model.latent_dimm"));
        assert!(err("[model]\nlatent_dim = \"x\"\n").contains("model.latent_dim"));
        assert!(err("[seeds]\ndemo = 3\neval = 3\n").contains("seeds.eval"));
        assert!(err("[seeds]\ndemo = 3\ntrain = 3\n").contains("pairwise distinct"));
        assert!(err("[model]\nlatent_dim = 3\n").contains("latent_dim"));
        assert!(err("env = \"chess\"\n").contains("env"));
    }

    #[test]
    fn toml_roundtrip() {
        let cfg = RunConfig {
            dataset: Some("d.jsonl".into()),
            ..RunConfig::defaults(EnvId::Keepaway)
        };
        let back = RunConfig::from_toml_str(&cfg.to_toml(), &Overrides::default()).unwrap();
        assert_eq!(back, cfg);
    }
}
