use std::fmt;

use serde::{Deserialize, Serialize};

use super::{PlannerError, PlannerParams, TrajectoryCandidate};
use crate::critic::{EgoView, StateValue};
use crate::rules::{rule_robustness, EgoTrack, RuleError, RuleId, RuleParams, World};
use crate::scenario::{FrenetPoint, Road, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub value: f64,
    pub g1: f64,
    pub i6: f64,
    pub i2: f64,
    pub jerk: f64,
    pub speed: f64,
    pub lateral: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self { value: 1.0, g1: 2.0, i6: 1.0, i2: 0.5, jerk: 0.1, speed: 0.2, lateral: 0.1 }
    }
}

impl CostWeights {
    pub fn zero() -> Self {
        Self { value: 0.0, g1: 0.0, i6: 0.0, i2: 0.0, jerk: 0.0, speed: 0.0, lateral: 0.0 }
    }

    pub fn weight(&self, term: CostTerm) -> f64 {
        match term {
            CostTerm::Value => self.value,
            CostTerm::Rule(RuleId::G1) => self.g1,
            CostTerm::Rule(RuleId::I6) => self.i6,
            CostTerm::Rule(RuleId::I2) => self.i2,
            CostTerm::Jerk => self.jerk,
            CostTerm::SpeedDeviation => self.speed,
            CostTerm::LateralDeviation => self.lateral,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [self.value, self.g1, self.i6, self.i2, self.jerk, self.speed, self.lateral];
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err("planner.weights must be finite and non-negative".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CostTerm {
    /// Mean of `-V` over strided states.
    Value,
    /// Mean negated clipped body robustness over the horizon.
    Rule(RuleId),
    /// Integral of squared longitudinal and lateral jerk.
    Jerk,
    /// Mean squared deviation from the desired speed.
    SpeedDeviation,
    /// Mean squared lateral offset from the route lane centre.
    LateralDeviation,
}

impl CostTerm {
    pub const ALL: [CostTerm; 7] = [
        CostTerm::Value,
        CostTerm::Rule(RuleId::G1),
        CostTerm::Rule(RuleId::I6),
        CostTerm::Rule(RuleId::I2),
        CostTerm::Jerk,
        CostTerm::SpeedDeviation,
        CostTerm::LateralDeviation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CostTerm::Value => "value",
            CostTerm::Rule(RuleId::G1) => "rule_g1",
            CostTerm::Rule(RuleId::I6) => "rule_i6",
            CostTerm::Rule(RuleId::I2) => "rule_i2",
            CostTerm::Jerk => "jerk",
            CostTerm::SpeedDeviation => "speed",
            CostTerm::LateralDeviation => "lateral",
        }
    }
}

impl fmt::Display for CostTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Unweighted term values and the weighted total.
#[derive(Debug, Clone, PartialEq)]
pub struct CostBreakdown {
    pub terms: Vec<(CostTerm, f64)>,
    pub total: f64,
}

impl CostBreakdown {
    pub fn get(&self, term: CostTerm) -> Option<f64> {
        self.terms.iter().find(|(t, _)| *t == term).map(|(_, v)| *v)
    }
}

/// Everything a cost evaluation needs besides the candidate itself.
#[derive(Clone, Copy)]
pub struct CostContext<'a> {
    pub scenario: &'a Scenario,
    pub road: &'a Road,
    /// Executed ego states; the last one is the planning start at `step`.
    pub history: &'a EgoTrack,
    pub step: usize,
    pub route_d: f64,
    pub goal: FrenetPoint,
    pub rules: &'a RuleParams,
    pub critic: Option<&'a dyn StateValue>,
    pub ego_length: f64,
    pub ego_width: f64,
}

/// Weighted sum of the cost terms; terms with zero weight are skipped.
pub fn total_cost(
    candidate: &TrajectoryCandidate,
    ctx: &CostContext<'_>,
    params: &PlannerParams,
) -> Result<CostBreakdown, PlannerError> {
    let weights = &params.weights;
    let mut terms = Vec::new();
    let mut total = 0.0;
    for term in CostTerm::ALL {
        let w = weights.weight(term);
        if w == 0.0 {
            continue;
        }
        let raw = match term {
            CostTerm::Value => value_term(candidate, ctx, params)?,
            CostTerm::Rule(rule) => rule_term(candidate, ctx, rule)?,
            CostTerm::Jerk => jerk_term(candidate, params.dt),
            CostTerm::SpeedDeviation => mean(candidate.states.iter().map(|s| (s.frenet.s_d - params.desired_speed).powi(2))),
            CostTerm::LateralDeviation => mean(candidate.states.iter().map(|s| (s.frenet.d - ctx.route_d).powi(2))),
        };
        terms.push((term, raw));
        total += w * raw;
    }
    Ok(CostBreakdown { terms, total })
}

fn mean(it: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = it.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

fn value_term(
    candidate: &TrajectoryCandidate,
    ctx: &CostContext<'_>,
    params: &PlannerParams,
) -> Result<f64, PlannerError> {
    let critic = ctx.critic.ok_or(PlannerError::MissingCritic)?;
    let last = candidate.states.len() - 1;
    let mut idx: Vec<usize> = (0..=last).step_by(params.value_stride.max(1)).collect();
    if idx.last() != Some(&last) {
        idx.push(last);
    }
    let mut sum = 0.0;
    for &j in &idx {
        let st = &candidate.states[j];
        let state = st.vehicle_state(ctx.road, ctx.ego_length, ctx.ego_width);
        let view = EgoView {
            scenario: ctx.scenario,
            road: ctx.road,
            state: &state,
            yaw_rate: st.yaw_rate(),
            goal: ctx.goal,
            step: ctx.step + j,
        };
        sum -= critic.state_value(&view).map_err(|e| PlannerError::Critic(e.to_string()))?;
    }
    Ok(sum / idx.len() as f64)
}

/// Ego track continued by the candidate's states after the start.
pub fn extended_track(candidate: &TrajectoryCandidate, ctx: &CostContext<'_>) -> EgoTrack {
    let mut states = ctx.history.states.clone();
    states.extend(
        candidate.states[1..].iter().map(|st| st.vehicle_state(ctx.road, ctx.ego_length, ctx.ego_width)),
    );
    EgoTrack::new(ctx.history.start_step, states)
}

fn rule_term(candidate: &TrajectoryCandidate, ctx: &CostContext<'_>, rule: RuleId) -> Result<f64, PlannerError> {
    let track = extended_track(candidate, ctx);
    let world = World::with_road(ctx.scenario, ctx.road.clone(), &track, ctx.rules)?;
    let mut sum = 0.0;
    let mut n = 0usize;
    for j in 1..candidate.states.len() {
        let step = ctx.step + j;
        if step >= ctx.scenario.num_steps {
            break;
        }
        match rule_robustness(rule, &world, step) {
            Ok(v) => {
                sum -= ctx.rules.clip(v);
                n += 1;
            }
            Err(RuleError::InvalidTimestep { .. }) => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

fn jerk_term(candidate: &TrajectoryCandidate, dt: f64) -> f64 {
    candidate
        .states
        .iter()
        .map(|s| candidate.longitudinal.jerk(s.t).powi(2) + candidate.lateral.jerk(s.t).powi(2))
        .sum::<f64>()
        * dt
}
