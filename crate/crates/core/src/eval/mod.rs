//! Grid heatmaps of state values and rule robustness over the road.

mod grid;
mod heatmap;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grid::{emit_grid, midpoint_threshold, onset_distance, EvalGrid, GridFormat, GridSpec, Overlay};
pub use heatmap::{ego_at, robustness_heatmap, value_heatmap, EgoTemplate};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation request: {0}")]
    Invalid(String),
    #[error("grid parse error: {0}")]
    Parse(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Scenario(#[from] crate::scenario::ScenarioError),
    #[error(transparent)]
    Rule(#[from] crate::rules::RuleError),
    #[error(transparent)]
    Critic(#[from] crate::critic::CriticError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalParams {
    pub cell_length: f64,
    pub cell_width: f64,
    pub ego_speed: f64,
    /// Scenario step the traffic is frozen at.
    pub step: usize,
    /// Fixed onset threshold; without one the midpoint threshold is used.
    pub threshold: Option<f64>,
    /// Cells further than this before a sign count as far upstream, metres.
    pub upstream: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        Self { cell_length: 4.0, cell_width: 1.0, ego_speed: 25.0, step: 50, threshold: None, upstream: 100.0 }
    }
}

impl EvalParams {
    pub fn grid(&self) -> GridSpec {
        GridSpec { cell_length: self.cell_length, cell_width: self.cell_width }
    }

    pub fn validate(&self) -> Result<(), String> {
        let sizes = [self.cell_length, self.cell_width];
        if sizes.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err("eval.cell_length and cell_width must be positive".into());
        }
        if !(self.ego_speed.is_finite() && self.ego_speed >= 0.0) || !(self.upstream >= 0.0) {
            return Err("eval.ego_speed and eval.upstream must be >= 0".into());
        }
        if self.threshold.map_or(false, |t| !t.is_finite()) {
            return Err("eval.threshold must be finite".into());
        }
        Ok(())
    }
}
