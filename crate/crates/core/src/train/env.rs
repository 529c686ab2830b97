//! Closed-loop episode: the planner drives the ego through log-replayed traffic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::reward::{reward_progression, reward_rule, RewardParts};
use super::TrainError;
use crate::critic::{EgoView, StateValue};
use crate::planner::{
    plan, rects_intersect, CostContext, FrenetState, PlannerError, PlannerParams, Rect, TrajectoryCandidate,
    TrajectoryState,
};
use crate::rules::{EgoTrack, RuleId, RuleParams, World};
use crate::scenario::{FrenetPoint, Road, Scenario, VehicleState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvironmentParams {
    pub ego_length: f64,
    pub ego_width: f64,
    /// Speed that makes the progression rate term equal to 1, m/s.
    pub reference_speed: f64,
    /// Required distance to every vehicle at the start position, metres.
    pub start_clearance: f64,
    pub reset_attempts: usize,
    /// Latest start step as a fraction of the scenario length.
    pub start_time_fraction: f64,
}

impl Default for EnvironmentParams {
    fn default() -> Self {
        Self {
            ego_length: 4.5,
            ego_width: 1.8,
            reference_speed: 15.0,
            start_clearance: 10.0,
            reset_attempts: 50,
            start_time_fraction: 0.25,
        }
    }
}

impl EnvironmentParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.ego_length > 0.0 && self.ego_width > 0.0 && self.reference_speed > 0.0) {
            return Err("environment ego size and reference_speed must be positive".into());
        }
        if !(self.start_clearance >= 0.0) || self.reset_attempts == 0 {
            return Err("environment.start_clearance must be >= 0 and reset_attempts >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.start_time_fraction) {
            return Err("environment.start_time_fraction must lie in [0, 1]".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Goal,
    OffRoad,
    Collision,
    /// The recording ran out; the episode is cut, not finished.
    ScenarioEnd,
    PlannerFailure,
}

impl Termination {
    /// Whether returns stop here rather than bootstrap.
    pub fn is_terminal(self) -> bool {
        !matches!(self, Termination::ScenarioEnd)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Termination::Goal => "goal",
            Termination::OffRoad => "off-road",
            Termination::Collision => "collision",
            Termination::ScenarioEnd => "scenario-end",
            Termination::PlannerFailure => "planner-failure",
        }
    }
}

/// Everything fixed for the lifetime of an episode.
#[derive(Clone, Copy)]
pub struct EnvContext<'a> {
    pub scenario: &'a Scenario,
    pub road: &'a Road,
    pub env: &'a EnvironmentParams,
    pub planner: &'a PlannerParams,
    pub rules: &'a RuleParams,
    pub phase: RuleId,
    pub rule_weight: f64,
    pub progression_weight: f64,
}

#[derive(Debug)]
pub enum StepResult {
    Moved { reward: RewardParts, termination: Option<Termination> },
    /// No candidate survived; the ego did not move.
    PlannerFailed(PlannerError),
}

#[derive(Debug, Clone)]
pub struct Episode {
    /// Executed ego states, starting with a synthetic cruise history.
    pub track: EgoTrack,
    /// Current scenario step; the last state of `track`.
    pub step: usize,
    pub state: FrenetState,
    pub yaw_rate: f64,
    pub goal: FrenetPoint,
    pub route_d: f64,
    /// Arc length at the start, origin of the progression reward.
    pub s_start: f64,
    pub plan: Option<TrajectoryCandidate>,
    plan_pos: usize,
    pub rewards: Vec<f64>,
    pub plans: usize,
    /// When set, every planning call's candidates are kept in `candidate_log`.
    pub record_candidates: bool,
    /// `(step, candidates)` per planning call.
    pub candidate_log: Vec<(usize, Vec<TrajectoryCandidate>)>,
}

/// Steps of synthetic history so the cut-in lookback is defined from the start.
pub fn history_steps(rules: &RuleParams, dt: f64) -> usize {
    (rules.cutin.t_c / dt - 1e-9).ceil().max(0.0) as usize + 1
}

impl Episode {
    /// Episode starting at scenario step `t0` at arc length `s0` in the lane with
    /// index `lane`, heading for the lane with index `route`.
    pub fn start(ctx: &EnvContext<'_>, t0: usize, s0: f64, lane: usize, route: usize) -> Result<Self, TrainError> {
        let road = ctx.road;
        let (Some(start_lane), Some(route_lane)) = (road.lanes.get(lane), road.lanes.get(route)) else {
            return Err(TrainError::Start(format!("lane index {lane} or {route} out of range")));
        };
        let hist = history_steps(ctx.rules, ctx.scenario.timestep);
        if t0 < hist || t0 + 1 >= ctx.scenario.num_steps {
            return Err(TrainError::Start(format!(
                "start step {t0} leaves no room for {hist} history steps in {} steps",
                ctx.scenario.num_steps
            )));
        }
        let goal = FrenetPoint { s: ctx.scenario.ego.goal_s, d: route_lane.d_center };
        if s0 >= goal.s {
            return Err(TrainError::Start(format!("start s = {s0} is past the goal")));
        }
        let v = ctx.scenario.ego.start_speed;
        let dt = ctx.scenario.timestep;
        let states = (0..=hist)
            .map(|k| {
                let f = FrenetState::cruise(s0 - v * (hist - k) as f64 * dt, start_lane.d_center, v);
                TrajectoryState::from_frenet(0.0, f, road).vehicle_state(road, ctx.env.ego_length, ctx.env.ego_width)
            })
            .collect();
        Ok(Self {
            track: EgoTrack::new(t0 - hist, states),
            step: t0,
            state: FrenetState::cruise(s0, start_lane.d_center, v),
            yaw_rate: 0.0,
            goal,
            route_d: route_lane.d_center,
            s_start: s0,
            plan: None,
            plan_pos: 0,
            rewards: Vec::new(),
            plans: 0,
            record_candidates: false,
            candidate_log: Vec::new(),
        })
    }

    /// Random start step, start distance before the goal, start lane and route
    /// lane, resampled until the ego starts clear of traffic.
    pub fn reset<R: Rng>(ctx: &EnvContext<'_>, rng: &mut R) -> Result<Self, TrainError> {
        let sc = ctx.scenario;
        let hist = history_steps(ctx.rules, sc.timestep);
        let latest = ((sc.num_steps as f64 * ctx.env.start_time_fraction) as usize).max(hist);
        if latest + 1 >= sc.num_steps {
            return Err(TrainError::Start(format!("scenario of {} steps is too short", sc.num_steps)));
        }
        let (lo, hi) = sc.ego.start_window;
        let n_lanes = ctx.road.lanes.len();
        for _ in 0..ctx.env.reset_attempts {
            let t0 = rng.random_range(hist..=latest);
            let dist = if hi > lo { rng.random_range(lo..=hi) } else { lo };
            let lane = rng.random_range(0..n_lanes);
            let route = rng.random_range(0..n_lanes);
            let s0 = (sc.ego.goal_s - dist).max(ctx.road.s_min);
            let ep = Self::start(ctx, t0, s0, lane, route)?;
            if ep.clearance(ctx) >= ctx.env.start_clearance {
                return Ok(ep);
            }
        }
        Err(TrainError::Start(format!("no clear start found in {} attempts", ctx.env.reset_attempts)))
    }

    pub fn ego_state(&self) -> &VehicleState {
        self.track.last().expect("episode track is never empty")
    }

    pub fn view<'a>(&'a self, ctx: &EnvContext<'a>) -> EgoView<'a> {
        EgoView {
            scenario: ctx.scenario,
            road: ctx.road,
            state: self.ego_state(),
            yaw_rate: self.yaw_rate,
            goal: self.goal,
            step: self.step,
        }
    }

    /// Smallest distance from the ego to any vehicle at the current step.
    pub fn clearance(&self, ctx: &EnvContext<'_>) -> f64 {
        let ego = Rect::of(self.ego_state());
        ctx.scenario
            .vehicles_at(self.step)
            .map(|o| crate::planner::rect_distance(&ego, &Rect::of(o)))
            .fold(f64::INFINITY, f64::min)
    }

    fn replan(&mut self, ctx: &EnvContext<'_>, critic: Option<&dyn StateValue>) -> Result<Option<PlannerError>, TrainError> {
        let cost_ctx = CostContext {
            scenario: ctx.scenario,
            road: ctx.road,
            history: &self.track,
            step: self.step,
            route_d: self.route_d,
            goal: self.goal,
            rules: ctx.rules,
            critic,
            ego_length: ctx.env.ego_length,
            ego_width: ctx.env.ego_width,
        };
        match plan(&self.state, &cost_ctx, ctx.planner) {
            Ok(outcome) => {
                if self.record_candidates {
                    self.candidate_log.push((self.step, outcome.candidates));
                }
                self.plan = Some(outcome.chosen);
                self.plan_pos = 0;
                self.plans += 1;
                Ok(None)
            }
            Err(e @ (PlannerError::AllRejected { .. } | PlannerError::NoCandidates)) => Ok(Some(e)),
            Err(e) => Err(e.into()),
        }
    }

    /// Advances one simulation step along the current plan, replanning every
    /// `replan_period`.
    pub fn step(&mut self, ctx: &EnvContext<'_>, critic: Option<&dyn StateValue>) -> Result<StepResult, TrainError> {
        let due = self.plan.as_ref().map_or(true, |p| self.plan_pos + 1 >= p.states.len())
            || self.plan_pos >= ctx.planner.replan_steps();
        if due {
            if let Some(e) = self.replan(ctx, critic)? {
                return Ok(StepResult::PlannerFailed(e));
            }
        }
        let plan = self.plan.as_ref().expect("plan present after replanning");
        self.plan_pos += 1;
        let st = plan.states[self.plan_pos];
        let prev_s = self.state.s;
        self.state = st.frenet;
        self.yaw_rate = st.yaw_rate();
        self.step += 1;
        self.track.states.push(st.vehicle_state(ctx.road, ctx.env.ego_length, ctx.env.ego_width));

        let world = World::with_road(ctx.scenario, ctx.road.clone(), &self.track, ctx.rules)?;
        let rule = reward_rule(ctx.phase, &world, self.step)?;
        let route_length = self.goal.s - self.s_start;
        let progression = reward_progression(
            prev_s - self.s_start,
            self.state.s - self.s_start,
            route_length,
            ctx.env.reference_speed,
            ctx.scenario.timestep,
        );
        let reward = RewardParts {
            rule: rule.unwrap_or(0.0),
            progression,
            rule_weight: ctx.rule_weight,
            progression_weight: ctx.progression_weight,
            rule_invalid: rule.is_none(),
        };
        self.rewards.push(reward.total());
        Ok(StepResult::Moved { reward, termination: self.termination(ctx) })
    }

    /// Step on which the episode started, after the synthetic history.
    pub fn start_step(&self) -> usize {
        self.step - self.rewards.len()
    }

    /// Steps until the episode ends. A planner failure ends it as
    /// [`Termination::PlannerFailure`].
    pub fn drive(&mut self, ctx: &EnvContext<'_>, critic: Option<&dyn StateValue>) -> Result<Termination, TrainError> {
        loop {
            match self.step(ctx, critic)? {
                StepResult::Moved { termination: Some(t), .. } => return Ok(t),
                StepResult::Moved { .. } => {}
                StepResult::PlannerFailed(_) => return Ok(Termination::PlannerFailure),
            }
        }
    }

    /// Writes `step,t,x,y,s,d,speed,heading` for every executed state, from
    /// the start state on; the synthetic history is left out.
    pub fn write_trajectory_csv<W: std::io::Write>(&self, ctx: &EnvContext<'_>, out: W) -> Result<(), TrainError> {
        let err = |e: csv::Error| TrainError::Csv(e.to_string());
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "t", "x", "y", "s", "d", "speed", "heading"]).map_err(err)?;
        for step in self.start_step()..=self.step {
            let st = self.track.state_at(step).expect("executed steps lie on the track");
            let p = ctx.road.frenet_unchecked(st.position);
            w.write_record([
                step.to_string(),
                format!("{:.3}", step as f64 * ctx.scenario.timestep),
                st.position.x.to_string(),
                st.position.y.to_string(),
                p.s.to_string(),
                p.d.to_string(),
                st.velocity.norm().to_string(),
                st.heading.to_string(),
            ])
            .map_err(err)?;
        }
        w.flush().map_err(|e| TrainError::Csv(e.to_string()))
    }

    fn termination(&self, ctx: &EnvContext<'_>) -> Option<Termination> {
        let ego = self.ego_state();
        let rect = Rect::of(ego);
        if ctx.scenario.vehicles_at(self.step).any(|o| rects_intersect(&rect, &Rect::of(o))) {
            return Some(Termination::Collision);
        }
        let fp = ctx.road.footprint(ego);
        if fp.right() < ctx.road.right_bound() || fp.left() > ctx.road.left_bound() {
            return Some(Termination::OffRoad);
        }
        if self.state.s >= self.goal.s {
            return Some(Termination::Goal);
        }
        if self.step + 1 >= ctx.scenario.num_steps {
            return Some(Termination::ScenarioEnd);
        }
        None
    }
}
