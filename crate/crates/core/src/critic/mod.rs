//! Graph value critic.
//!
//! The ego's neighbourhood becomes a small vehicle graph ([`build_graph`]),
//! which a message-passing network maps to a scalar state value.

mod adam;
mod checkpoint;
mod features;
mod network;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{Adam, AdamParams};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, sidecar_path, write_checkpoint, CHECKPOINT_MAGIC};
pub use features::{
    build_graph, norm_acceleration, norm_heading_error, norm_lane_bound, norm_position, norm_relative_velocity,
    norm_road_bound, norm_sign_distance, norm_velocity, norm_yaw_rate, sign_distance, signed_log, Edge, TrafficGraph,
    EDGE_DIM, EGO_DIM, EGO_FEATURES, NODE_DIM,
};
pub use network::{Arch, Block, Cache, ValueNet};

use crate::scenario::{FrenetPoint, Road, Scenario, VehicleState};

#[derive(Debug, Error)]
pub enum CriticError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid ego state: {0}")]
    State(String),
}

/// Graph construction limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    /// Maximum edges per vehicle.
    pub neighbors: usize,
    /// Edges only join vehicles closer than this, metres.
    pub edge_radius: f64,
    pub sensor_radius: f64,
    /// Cap of the distance-to-sign feature, metres.
    pub sign_range: f64,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self { neighbors: 3, edge_radius: 50.0, sensor_radius: 100.0, sign_range: 100.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub layers: usize,
    pub hidden: usize,
    pub embed: usize,
    pub head: Vec<usize>,
    pub neighbors: usize,
    pub edge_radius: f64,
    pub sensor_radius: f64,
    pub sign_range: f64,
    /// The raw network output is multiplied by this to give V.
    pub return_scale: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        let a = Arch::default();
        let g = GraphParams::default();
        Self {
            layers: a.layers,
            hidden: a.hidden,
            embed: a.embed,
            head: a.head,
            neighbors: g.neighbors,
            edge_radius: g.edge_radius,
            sensor_radius: g.sensor_radius,
            sign_range: g.sign_range,
            return_scale: 3000.0,
        }
    }
}

impl ModelParams {
    pub fn arch(&self) -> Arch {
        Arch { layers: self.layers, hidden: self.hidden, embed: self.embed, head: self.head.clone(), ..Arch::default() }
    }

    pub fn graph(&self) -> GraphParams {
        GraphParams {
            neighbors: self.neighbors,
            edge_radius: self.edge_radius,
            sensor_radius: self.sensor_radius,
            sign_range: self.sign_range,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.hidden == 0 || self.embed == 0 || self.head.contains(&0) {
            return Err("model widths must be positive".into());
        }
        if self.neighbors == 0 {
            return Err("model.neighbors must be positive".into());
        }
        let radii = [self.edge_radius, self.sensor_radius, self.sign_range, self.return_scale];
        if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) {
            return Err("model radii, sign_range and return_scale must be positive".into());
        }
        Ok(())
    }
}

/// The ego state a value is asked for, with its surroundings.
#[derive(Clone, Copy)]
pub struct EgoView<'a> {
    pub scenario: &'a Scenario,
    pub road: &'a Road,
    pub state: &'a VehicleState,
    pub yaw_rate: f64,
    pub goal: FrenetPoint,
    /// Scenario step the other vehicles are taken from.
    pub step: usize,
}

pub trait StateValue: Sync {
    fn state_value(&self, view: &EgoView<'_>) -> Result<f64, CriticError>;
}

/// Value network together with the graph construction it was trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct Critic {
    pub net: ValueNet,
    pub graph: GraphParams,
}

impl Critic {
    pub fn new(model: &ModelParams, seed: u64) -> Self {
        Self { net: ValueNet::init(model.arch(), model.return_scale, seed), graph: model.graph() }
    }

    pub fn zeros(model: &ModelParams) -> Self {
        Self { net: ValueNet::zeros(model.arch(), model.return_scale), graph: model.graph() }
    }

    pub fn graph_of(&self, view: &EgoView<'_>) -> Result<TrafficGraph, CriticError> {
        build_graph(view, &self.graph)
    }
}

impl StateValue for Critic {
    fn state_value(&self, view: &EgoView<'_>) -> Result<f64, CriticError> {
        let graph = self.graph_of(view)?;
        self.net.value(&graph)
    }
}
