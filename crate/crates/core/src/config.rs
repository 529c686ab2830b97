//! Flat experiment configuration: `key = value` lines under `[section]`
//! headers (a TOML subset). Every key is optional; unknown keys are errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::critic::ModelParams;
use crate::eval::EvalParams;
use crate::planner::PlannerParams;
use crate::rules::RuleParams;
use crate::train::{EnvironmentParams, LearningParams, TrainingParams};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub environment: EnvironmentParams,
    pub planner: PlannerParams,
    pub rules: RuleParams,
    pub model: ModelParams,
    pub learning: LearningParams,
    pub training: TrainingParams,
    pub eval: EvalParams,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let checks = [
            self.environment.validate(),
            self.planner.validate(),
            self.rules.validate(),
            self.model.validate(),
            self.learning.validate(),
            self.training.validate(),
            self.eval.validate(),
        ];
        checks.into_iter().collect::<Result<(), String>>().map_err(ConfigError::Invalid)
    }

    /// Canonical text form; parsing it gives back an equal config.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config values serialise")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rules::RuleId;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(Config::parse("").unwrap(), Config::default());
    }

    #[test]
    fn sections_override_defaults() {
        let cfg = Config::parse(
            "[training]\nphase = \"G1\"\ntotal_steps = 512\n\n[rules.safe_distance]\ndelta = 0.5\n\n[eval]\ncell_length = 2.0\n",
        )
        .unwrap();
        assert_eq!(cfg.training.phase, RuleId::G1);
        assert_eq!(cfg.training.total_steps, 512);
        assert_eq!(cfg.rules.safe_distance.delta, 0.5);
        assert_eq!(cfg.eval.cell_length, 2.0);
        assert_eq!(cfg.learning, LearningParams::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(Config::parse("[model]\nwidth = 3\n"), Err(ConfigError::Parse(_))));
        assert!(matches!(Config::parse("[nonsense]\n"), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn values_validated() {
        assert!(matches!(Config::parse("[learning]\ngamma = 1.5\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(Config::parse("[eval]\ncell_width = 0.0\n"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn canonical_text_round_trips() {
        let mut cfg = Config::default();
        cfg.model.hidden = 16;
        cfg.training.phase = RuleId::I2;
        assert_eq!(Config::parse(&cfg.to_toml()).unwrap(), cfg);
    }
}
