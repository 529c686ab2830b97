//! Highway traffic-rule compliance toolkit.
//!
//! The crate bundles five layers that build on each other:
//!
//! * [`scenario`]: lane geometry, recorded tracks, ingestion and synthetic generation.
//! * [`rules`]: quantitative STL robustness and the prioritised rule book.
//! * [`planner`]: a Frenet lattice planner with a composable cost function.
//! * [`critic`]: ego-centric traffic graphs and a message-passing value network.
//! * [`train`]: the planner-as-actor training loop that fits the critic.
//! * [`eval`]: grid heatmaps of values and robustness.

pub mod config;
pub mod critic;
pub mod eval;
pub mod planner;
pub mod rules;
pub mod scenario;
pub mod seed;
pub mod train;

mod error;

pub use config::Config;
pub use error::{Error, Result};
pub use scenario::{Scenario, VehicleId, VehicleState};
