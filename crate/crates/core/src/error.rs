use thiserror::Error;

use crate::config::ConfigError;
use crate::critic::CriticError;
use crate::eval::EvalError;
use crate::planner::PlannerError;
use crate::rules::RuleError;
use crate::scenario::ScenarioError;
use crate::train::TrainError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error, one variant per subsystem.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Critic(#[from] CriticError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

impl Error {
    /// True when the error stems from malformed or inconsistent input data
    /// rather than a failure while running.
    pub fn is_data_error(&self) -> bool {
        matches!(self, Error::Scenario(_) | Error::Config(_))
            || matches!(self, Error::Critic(CriticError::Checkpoint(_)))
    }
}
