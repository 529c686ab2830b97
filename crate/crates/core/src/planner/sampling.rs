use super::poly::{QuarticPoly, QuinticPoly};
use super::{CostBreakdown, Feasibility, PlannerError, PlannerParams};
use crate::scenario::{wrap_angle, Road, Vec2, VehicleId, VehicleState};

/// Ego state in road coordinates with first and second derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetState {
    pub s: f64,
    pub s_d: f64,
    pub s_dd: f64,
    pub d: f64,
    pub d_d: f64,
    pub d_dd: f64,
}

impl FrenetState {
    /// Cruise state: constant speed along the road.
    pub fn cruise(s: f64, d: f64, speed: f64) -> Self {
        Self { s, s_d: speed, s_dd: 0.0, d, d_d: 0.0, d_dd: 0.0 }
    }

    pub fn is_finite(&self) -> bool {
        [self.s, self.s_d, self.s_dd, self.d, self.d_d, self.d_dd].iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryState {
    pub t: f64,
    pub frenet: FrenetState,
    pub v: f64,
    /// Magnitude of the combined acceleration vector.
    pub a: f64,
    /// Native-frame heading.
    pub heading: f64,
    pub curvature: f64,
    pub x: f64,
    pub y: f64,
}

impl TrajectoryState {
    pub fn from_frenet(t: f64, f: FrenetState, road: &Road) -> Self {
        let v = f.s_d.hypot(f.d_d);
        let a = f.s_dd.hypot(f.d_dd);
        let road_heading = f.d_d.atan2(f.s_d);
        let curvature = if v > 1e-6 { (f.s_d * f.d_dd - f.d_d * f.s_dd) / (v * v * v) } else { 0.0 };
        let p = road.cartesian_of(crate::scenario::FrenetPoint { s: f.s, d: f.d });
        Self { t, frenet: f, v, a, heading: road.heading_from_road(road_heading), curvature, x: p.x, y: p.y }
    }

    /// Native-frame vehicle state for an ego of the given size.
    pub fn vehicle_state(&self, road: &Road, length: f64, width: f64) -> VehicleState {
        let f = &self.frenet;
        VehicleState {
            id: VehicleId::EGO,
            position: Vec2::new(self.x, self.y),
            velocity: road.velocity_from_frenet(f.s_d, f.d_d),
            acceleration: road.velocity_from_frenet(f.s_dd, f.d_dd),
            heading: wrap_angle(self.heading),
            length,
            width,
            lane_id: road.nearest_lane(f.d).id,
        }
    }

    /// Heading rate implied by the path curvature.
    pub fn yaw_rate(&self) -> f64 {
        self.curvature * self.v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryCandidate {
    /// Position in generation order; the final tie-breaker.
    pub index: usize,
    /// 0 for the coarse lattice, 1 for the fine fallback.
    pub level: usize,
    pub d_target: f64,
    pub v_target: f64,
    pub horizon: f64,
    pub lateral: QuinticPoly,
    pub longitudinal: QuarticPoly,
    pub states: Vec<TrajectoryState>,
    pub feasibility: Option<Feasibility>,
    pub collision_free: Option<bool>,
    pub cost: Option<CostBreakdown>,
}

impl TrajectoryCandidate {
    pub fn new(
        index: usize,
        level: usize,
        start: &FrenetState,
        d_target: f64,
        v_target: f64,
        params: &PlannerParams,
        road: &Road,
    ) -> Self {
        let horizon = params.horizon;
        let lateral = QuinticPoly::new((start.d, start.d_d, start.d_dd), (d_target, 0.0, 0.0), horizon);
        let longitudinal = QuarticPoly::new((start.s, start.s_d, start.s_dd), (v_target, 0.0), horizon);
        let states = (0..params.steps())
            .map(|k| {
                let t = k as f64 * params.dt;
                let f = FrenetState {
                    s: longitudinal.pos(t),
                    s_d: longitudinal.vel(t),
                    s_dd: longitudinal.acc(t),
                    d: lateral.pos(t),
                    d_d: lateral.vel(t),
                    d_dd: lateral.acc(t),
                };
                TrajectoryState::from_frenet(t, f, road)
            })
            .collect();
        Self {
            index,
            level,
            d_target,
            v_target,
            horizon,
            lateral,
            longitudinal,
            states,
            feasibility: None,
            collision_free: None,
            cost: None,
        }
    }

    pub fn total_cost(&self) -> f64 {
        self.cost.as_ref().map_or(f64::INFINITY, |c| c.total)
    }
}

/// Lateral targets of one lattice level around the current lane centre,
/// kept within the outermost lane centres.
pub fn lateral_targets(road: &Road, d: f64, offsets: &[f64]) -> Vec<f64> {
    let lane = road.nearest_lane(d);
    let lo = road.lanes[0].d_center;
    let hi = road.lanes[road.lanes.len() - 1].d_center;
    offsets
        .iter()
        .map(|k| lane.d_center + k * lane.width)
        .filter(|t| *t >= lo - 1e-9 && *t <= hi + 1e-9)
        .collect()
}

/// Candidates of one lattice level: lateral targets × target speeds.
pub fn sample_level(
    start: &FrenetState,
    params: &PlannerParams,
    road: &Road,
    level: usize,
) -> Result<Vec<TrajectoryCandidate>, PlannerError> {
    if !start.is_finite() {
        return Err(PlannerError::InvalidState);
    }
    let (lateral, speeds) = params.level(level);
    let targets = lateral_targets(road, start.d, lateral);
    let mut out = Vec::with_capacity(targets.len() * speeds.len());
    for &d in &targets {
        for &dv in speeds {
            out.push(TrajectoryCandidate::new(out.len(), level, start, d, start.s_d + dv, params, road));
        }
    }
    if out.is_empty() {
        return Err(PlannerError::NoCandidates);
    }
    Ok(out)
}

/// Explicit lateral targets × target speeds, for callers choosing their own lattice.
pub fn sample_candidates(
    start: &FrenetState,
    d_targets: &[f64],
    v_targets: &[f64],
    params: &PlannerParams,
    road: &Road,
) -> Result<Vec<TrajectoryCandidate>, PlannerError> {
    if !start.is_finite() {
        return Err(PlannerError::InvalidState);
    }
    let mut out = Vec::with_capacity(d_targets.len() * v_targets.len());
    for &d in d_targets {
        for &v in v_targets {
            out.push(TrajectoryCandidate::new(out.len(), 0, start, d, v, params, road));
        }
    }
    if out.is_empty() {
        return Err(PlannerError::NoCandidates);
    }
    Ok(out)
}
