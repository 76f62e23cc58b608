//! Run configuration, loaded from TOML. Every section and field is optional.

use std::path::{Path, PathBuf};

use feedrank_core::coldstart::ColdStartConfig;
use feedrank_core::eval::EvalProtocol;
use feedrank_core::features::EngagementWeights;
use feedrank_core::neumf::{LatentConfig, TrainConfig};
use feedrank_core::synth::GenConfig;
use feedrank_service::EngineConfig;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ServeConfig {
    pub addr: String,
    pub rebuild_every: usize,
    pub default_k: usize,
    pub static_dir: Option<PathBuf>,
}

impl Default for ServeConfig {
    fn default() -> Self {
        ServeConfig {
            addr: "127.0.0.1:8080".into(),
            rebuild_every: 50,
            default_k: 10,
            static_dir: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub generator: GenConfig,
    pub evaluation: EvalProtocol,
    pub latent: LatentConfig,
    pub training: TrainConfig,
    pub engagement: EngagementWeights,
    pub cold_start: ColdStartConfig,
    pub serve: ServeConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid configuration: {0}")]
    Invalid(#[from] feedrank_core::Error),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn from_toml(text: &str) -> Result<RunConfig, toml::de::Error> {
        toml::from_str(text)
    }

    /// Loads `path` if given, applies the seed override and validates.
    pub fn resolve(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = seed {
            cfg.set_seed(s);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Uses one seed for generation, the evaluation split, initialization and training.
    pub fn set_seed(&mut self, seed: u64) {
        self.generator.seed = seed;
        self.evaluation.seed = seed;
        self.latent.seed = seed;
        self.training.seed = seed;
    }

    pub fn validate(&self) -> feedrank_core::Result<()> {
        self.generator.validate()?;
        self.latent.validate()?;
        self.training.validate()?;
        self.engagement.validate()
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            rebuild_every: self.serve.rebuild_every,
            default_k: self.serve.default_k,
            cold_start: self.cold_start.clone(),
            engagement: self.engagement.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_is_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn partial_sections_keep_other_defaults() {
        let cfg = RunConfig::from_toml("[generator]\nn_users = 50\n[training]\nepochs = 3\n").unwrap();
        assert_eq!(cfg.generator.n_users, 50);
        assert_eq!(cfg.generator.n_posts, 2000);
        assert_eq!(cfg.training.epochs, 3);
        assert_eq!(cfg.training.batch_size, 128);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::from_toml("[generator]\nn_user = 50\n").is_err());
        assert!(RunConfig::from_toml("[bogus]\n").is_err());
    }

    #[test]
    fn seed_override_reaches_every_stage() {
        let mut cfg = RunConfig::default();
        cfg.set_seed(7);
        assert_eq!(
            [
                cfg.generator.seed,
                cfg.evaluation.seed,
                cfg.latent.seed,
                cfg.training.seed
            ],
            [7; 4]
        );
    }

    #[test]
    fn invalid_values_fail_validation() {
        let cfg = RunConfig::from_toml("[training]\nlearning_rate = -1.0\n").unwrap();
        assert!(cfg.validate().is_err());
    }
}
