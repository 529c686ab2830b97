//! Frenet lattice planner.
//!
//! Candidates pair a lateral quintic with a velocity-keeping longitudinal
//! quartic. They are filtered by kinematic feasibility and clearance to the
//! log-replayed traffic, then the cheapest survivor is selected.

mod check;
mod cost;
mod poly;
mod sampling;

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use check::{check_collision, check_feasibility, rect_distance, rects_intersect, Constraint, Feasibility, Rect};
pub use cost::{extended_track, total_cost, CostBreakdown, CostContext, CostTerm, CostWeights};
pub use poly::{QuarticPoly, QuinticPoly};
pub use sampling::{
    lateral_targets, sample_candidates, sample_level, FrenetState, TrajectoryCandidate, TrajectoryState,
};

use crate::rules::RuleError;

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("the lattice produced no candidates")]
    NoCandidates,
    #[error("planning start state is not finite")]
    InvalidState,
    #[error("value cost term has non-zero weight but no critic was supplied")]
    MissingCritic,
    #[error("all {evaluated} candidates rejected ({infeasible} infeasible, {colliding} too close to traffic)")]
    AllRejected { evaluated: usize, infeasible: usize, colliding: usize },
    #[error("rule evaluation: {0}")]
    Rule(#[from] RuleError),
    #[error("critic evaluation: {0}")]
    Critic(String),
    #[error("cannot write planner dump: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    /// Seconds between replanning.
    pub replan_period: f64,
    pub horizon: f64,
    pub dt: f64,
    /// Number of lattice levels tried in order (1 = coarse only, 2 = with fine fallback).
    pub sampling_levels: usize,
    /// Lateral end offsets of the coarse level, in lane widths from the current lane centre.
    pub coarse_lateral: Vec<f64>,
    /// Target-speed offsets of the coarse level, m/s.
    pub coarse_speeds: Vec<f64>,
    pub fine_lateral: Vec<f64>,
    pub fine_speeds: Vec<f64>,
    pub max_acceleration: f64,
    pub max_curvature: f64,
    pub min_speed: f64,
    pub max_speed: f64,
    /// Minimum distance to other vehicles, metres.
    pub clearance: f64,
    pub desired_speed: f64,
    /// Stride, in states, of the value term.
    pub value_stride: usize,
    pub weights: CostWeights,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            replan_period: 0.5,
            horizon: 2.0,
            dt: 0.1,
            sampling_levels: 2,
            coarse_lateral: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            coarse_speeds: vec![-2.0, 0.0, 2.0],
            fine_lateral: vec![-1.0, -0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75, 1.0],
            fine_speeds: vec![-4.0, -2.0, 0.0, 2.0, 4.0],
            max_acceleration: 8.0,
            max_curvature: 0.2,
            min_speed: 0.0,
            max_speed: 50.0,
            clearance: 3.0,
            desired_speed: 15.0,
            value_stride: 5,
            weights: CostWeights::default(),
        }
    }
}

impl PlannerParams {
    /// Number of states per candidate, `horizon / dt + 1`.
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize + 1
    }

    /// Simulation steps executed per plan.
    pub fn replan_steps(&self) -> usize {
        (self.replan_period / self.dt).round() as usize
    }

    pub fn level(&self, level: usize) -> (&[f64], &[f64]) {
        if level == 0 {
            (&self.coarse_lateral, &self.coarse_speeds)
        } else {
            (&self.fine_lateral, &self.fine_speeds)
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.dt > 0.0 && self.horizon > 0.0 && self.replan_period > 0.0) {
            return Err("planner.dt, horizon and replan_period must be positive".into());
        }
        if self.replan_period > self.horizon + 1e-12 {
            return Err("planner.replan_period must not exceed the horizon".into());
        }
        let ratio = self.horizon / self.dt;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err("planner.horizon must be a multiple of dt".into());
        }
        if !(1..=2).contains(&self.sampling_levels) {
            return Err("planner.sampling_levels must be 1 or 2".into());
        }
        if self.coarse_lateral.is_empty() || self.coarse_speeds.is_empty() {
            return Err("planner coarse lattice must be non-empty".into());
        }
        if self.sampling_levels == 2 && (self.fine_lateral.is_empty() || self.fine_speeds.is_empty()) {
            return Err("planner fine lattice must be non-empty".into());
        }
        if !(self.max_acceleration > 0.0 && self.max_curvature > 0.0 && self.max_speed > self.min_speed) {
            return Err("planner limits must be positive and max_speed > min_speed".into());
        }
        if !(self.clearance >= 0.0) || self.value_stride == 0 {
            return Err("planner.clearance must be >= 0 and value_stride >= 1".into());
        }
        self.weights.validate()
    }
}

/// Result of one planning call.
#[derive(Debug, Clone)]
pub struct PlanOutcome {
    pub chosen: TrajectoryCandidate,
    /// Every candidate evaluated, with verdicts and costs where computed.
    pub candidates: Vec<TrajectoryCandidate>,
}

/// Orders candidates by cost, then lateral distance of the end offset from
/// the route, then generation index.
pub fn compare_candidates(a: &TrajectoryCandidate, b: &TrajectoryCandidate, route_d: f64) -> Ordering {
    a.total_cost()
        .total_cmp(&b.total_cost())
        .then((a.d_target - route_d).abs().total_cmp(&(b.d_target - route_d).abs()))
        .then(a.level.cmp(&b.level))
        .then(a.index.cmp(&b.index))
}

/// Index into `candidates` of the best costed candidate.
pub fn select(candidates: &[TrajectoryCandidate], route_d: f64) -> Option<usize> {
    candidates
        .iter()
        .enumerate()
        .filter(|(_, c)| c.cost.is_some())
        .min_by(|(_, a), (_, b)| compare_candidates(a, b, route_d))
        .map(|(i, _)| i)
}

/// Verdicts and cost for every candidate, evaluated in parallel.
pub fn evaluate_candidates(
    candidates: &mut [TrajectoryCandidate],
    ctx: &CostContext<'_>,
    params: &PlannerParams,
) -> Result<(), PlannerError> {
    let results: Vec<Result<(), PlannerError>> = candidates
        .par_iter_mut()
        .map(|c| {
            let feas = check_feasibility(c, params, ctx.road, ctx.ego_length, ctx.ego_width);
            c.feasibility = Some(feas);
            if !feas.is_feasible() {
                return Ok(());
            }
            let clear =
                check_collision(c, ctx.scenario, ctx.step, ctx.ego_length, ctx.ego_width, params.clearance);
            c.collision_free = Some(clear);
            if clear {
                c.cost = Some(total_cost(c, ctx, params)?);
            }
            Ok(())
        })
        .collect();
    results.into_iter().collect()
}

/// Samples, filters and selects a trajectory from `start`, escalating to the
/// fine lattice only when the coarse one has no survivor.
pub fn plan(start: &FrenetState, ctx: &CostContext<'_>, params: &PlannerParams) -> Result<PlanOutcome, PlannerError> {
    let mut all = Vec::new();
    for level in 0..params.sampling_levels {
        let mut cands = sample_level(start, params, ctx.road, level)?;
        evaluate_candidates(&mut cands, ctx, params)?;
        let best = select(&cands, ctx.route_d);
        all.extend(cands.iter().cloned());
        if let Some(i) = best {
            return Ok(PlanOutcome { chosen: cands.swap_remove(i), candidates: all });
        }
    }
    let infeasible = all.iter().filter(|c| !c.feasibility.is_some_and(|f| f.is_feasible())).count();
    Err(PlannerError::AllRejected { evaluated: all.len(), infeasible, colliding: all.len() - infeasible })
}

/// One row per candidate: id, lattice level, targets, verdicts and cost terms.
pub fn write_debug_csv<W: Write>(candidates: &[TrajectoryCandidate], out: W) -> Result<(), PlannerError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<String> =
        ["candidate", "level", "d_target", "v_target", "feasible", "constraint", "collision_free", "total"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    header.extend(CostTerm::ALL.iter().map(|t| t.name().to_string()));
    w.write_record(&header).map_err(csv_err)?;
    for c in candidates {
        let (feasible, constraint) = match c.feasibility {
            Some(Feasibility::Feasible) => ("true".to_string(), String::new()),
            Some(Feasibility::Infeasible { constraint, .. }) => ("false".to_string(), constraint.to_string()),
            None => (String::new(), String::new()),
        };
        let mut row = vec![
            c.index.to_string(),
            c.level.to_string(),
            c.d_target.to_string(),
            c.v_target.to_string(),
            feasible,
            constraint,
            c.collision_free.map(|b| b.to_string()).unwrap_or_default(),
            c.cost.as_ref().map(|b| b.total.to_string()).unwrap_or_default(),
        ];
        for term in CostTerm::ALL {
            row.push(c.cost.as_ref().and_then(|b| b.get(term)).map(|v| v.to_string()).unwrap_or_default());
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> PlannerError {
    PlannerError::Io(std::io::Error::other(e.to_string()))
}
