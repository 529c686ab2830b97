use std::fmt;

use super::{PlannerParams, TrajectoryCandidate};
use crate::scenario::{Road, Scenario, Vec2, VehicleState};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    Velocity,
    Acceleration,
    Curvature,
    OffRoad,
}

impl Constraint {
    pub fn as_str(self) -> &'static str {
        match self {
            Constraint::Velocity => "velocity",
            Constraint::Acceleration => "acceleration",
            Constraint::Curvature => "curvature",
            Constraint::OffRoad => "off-road",
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Feasibility {
    Feasible,
    /// First violated constraint and the step where it failed.
    Infeasible { constraint: Constraint, step: usize },
}

impl Feasibility {
    pub fn is_feasible(&self) -> bool {
        matches!(self, Feasibility::Feasible)
    }
}

/// Checks every state in time order; within a state the constraints are
/// tried as velocity, acceleration, curvature, off-road.
pub fn check_feasibility(
    candidate: &TrajectoryCandidate,
    params: &PlannerParams,
    road: &Road,
    ego_length: f64,
    ego_width: f64,
) -> Feasibility {
    for (step, st) in candidate.states.iter().enumerate() {
        let f = &st.frenet;
        let failed = if f.s_d < params.min_speed || st.v > params.max_speed {
            Some(Constraint::Velocity)
        } else if st.a > params.max_acceleration {
            Some(Constraint::Acceleration)
        } else if st.curvature.abs() > params.max_curvature {
            Some(Constraint::Curvature)
        } else {
            let rel = f.d_d.atan2(f.s_d);
            let half_d = 0.5 * (rel.sin().abs() * ego_length + rel.cos().abs() * ego_width);
            if f.d - half_d < road.right_bound() || f.d + half_d > road.left_bound() {
                Some(Constraint::OffRoad)
            } else {
                None
            }
        };
        if let Some(constraint) = failed {
            return Feasibility::Infeasible { constraint, step };
        }
    }
    Feasibility::Feasible
}

/// True iff at every step the ego rectangle keeps at least `clearance`
/// metres from every replayed vehicle.
pub fn check_collision(
    candidate: &TrajectoryCandidate,
    scenario: &Scenario,
    start_step: usize,
    ego_length: f64,
    ego_width: f64,
    clearance: f64,
) -> bool {
    candidate.states.iter().enumerate().all(|(j, st)| {
        let ego = Rect::new(Vec2::new(st.x, st.y), st.heading, ego_length, ego_width);
        scenario
            .vehicles_at(start_step + j)
            .all(|other| rect_distance(&ego, &Rect::of(other)) >= clearance)
    })
}

/// Oriented rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub corners: [Vec2; 4],
}

impl Rect {
    pub fn new(center: Vec2, heading: f64, length: f64, width: f64) -> Self {
        let (sin, cos) = heading.sin_cos();
        let (hl, hw) = (0.5 * length, 0.5 * width);
        let corner = |a: f64, b: f64| Vec2::new(center.x + a * cos - b * sin, center.y + a * sin + b * cos);
        Self { corners: [corner(hl, hw), corner(-hl, hw), corner(-hl, -hw), corner(hl, -hw)] }
    }

    pub fn of(state: &VehicleState) -> Self {
        Self::new(state.position, state.heading, state.length, state.width)
    }

    fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        (0..4).map(move |i| (self.corners[i], self.corners[(i + 1) % 4]))
    }
}

fn dot(a: Vec2, b: Vec2) -> f64 {
    a.x * b.x + a.y * b.y
}

fn sub(a: Vec2, b: Vec2) -> Vec2 {
    Vec2::new(a.x - b.x, a.y - b.y)
}

/// Separating-axis test on the four edge normals.
pub fn rects_intersect(a: &Rect, b: &Rect) -> bool {
    for r in [a, b] {
        for (p, q) in r.edges().take(2) {
            let e = sub(q, p);
            let axis = Vec2::new(-e.y, e.x);
            let project = |x: &Rect| {
                x.corners.iter().map(|c| dot(*c, axis)).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                })
            };
            let (a0, a1) = project(a);
            let (b0, b1) = project(b);
            if a1 < b0 || b1 < a0 {
                return false;
            }
        }
    }
    true
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = sub(b, a);
    let len2 = dot(ab, ab);
    let t = if len2 > 0.0 { (dot(sub(p, a), ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let c = Vec2::new(a.x + t * ab.x, a.y + t * ab.y);
    (p.x - c.x).hypot(p.y - c.y)
}

/// Euclidean distance between two rectangles; 0 when they intersect.
pub fn rect_distance(a: &Rect, b: &Rect) -> f64 {
    if rects_intersect(a, b) {
        return 0.0;
    }
    // Disjoint convex polygons: the closest pair always involves a vertex.
    let mut best = f64::INFINITY;
    for (p, q) in b.edges() {
        for c in &a.corners {
            best = best.min(point_segment_distance(*c, p, q));
        }
    }
    for (p, q) in a.edges() {
        for c in &b.corners {
            best = best.min(point_segment_distance(*c, p, q));
        }
    }
    best
}
