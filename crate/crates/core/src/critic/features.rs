//! Ego-centric vehicle graph and its normalised features.

use std::collections::VecDeque;

use super::{CriticError, EgoView, GraphParams};
use crate::scenario::{SignKind, Vec2, VehicleId, VehicleState};

pub const NODE_DIM: usize = 4;
pub const EDGE_DIM: usize = 6;
pub const EGO_DIM: usize = 12;

/// Names of the ego feature columns, in order.
pub const EGO_FEATURES: [&str; EGO_DIM] = [
    "Acceleration",
    "Velocity",
    "YawRate",
    "DistLeftBound",
    "DistRightBound",
    "DistLeftRoadBound",
    "DistRightRoadBound",
    "HeadingError",
    "GoalDistLateral",
    "GoalDistLongitudinal",
    "Lane",
    "NonOvertakingTSRelative",
];

pub fn norm_position(p: f64) -> f64 {
    p / 50.0
}

pub fn norm_velocity(v: f64) -> f64 {
    (v - 15.0) / 20.0
}

pub fn norm_acceleration(a: f64) -> f64 {
    a / 20.0
}

pub fn norm_yaw_rate(y: f64) -> f64 {
    y.clamp(-1.0, 1.0)
}

pub fn norm_lane_bound(d: f64) -> f64 {
    d / 2.0
}

/// Road-bound distance, offset by the matching lane-bound distance.
pub fn norm_road_bound(road: f64, lane: f64) -> f64 {
    (road + lane) / 12.0
}

pub fn norm_heading_error(h: f64) -> f64 {
    h.clamp(-std::f64::consts::FRAC_PI_4, std::f64::consts::FRAC_PI_4)
}

/// `log(|f| + 1) * sign(f)`, with 0 mapped to 0.
pub fn signed_log(f: f64) -> f64 {
    if f == 0.0 {
        0.0
    } else {
        (f.abs() + 1.0).ln() * f.signum()
    }
}

pub fn norm_sign_distance(f: f64) -> f64 {
    (f - 50.0) / 50.0
}

pub fn norm_relative_velocity(v: f64) -> f64 {
    v / 20.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    /// Sender node.
    pub src: usize,
    /// Receiver node.
    pub dst: usize,
    /// Centre distance before normalisation, metres.
    pub length: f64,
    pub features: [f64; EDGE_DIM],
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrafficGraph {
    /// Node 0 is the ego vehicle.
    pub nodes: Vec<[f64; NODE_DIM]>,
    pub ids: Vec<VehicleId>,
    /// Sorted by `(dst, src)`.
    pub edges: Vec<Edge>,
    pub ego: [f64; EGO_DIM],
}

impl TrafficGraph {
    pub const EGO_INDEX: usize = 0;

    pub fn out_degree(&self, node: usize) -> usize {
        self.edges.iter().filter(|e| e.src == node).count()
    }
}

fn rotate(v: Vec2, heading: f64) -> Vec2 {
    let (sin, cos) = heading.sin_cos();
    Vec2::new(cos * v.x + sin * v.y, -sin * v.x + cos * v.y)
}

/// Distance to the next no-overtaking start sign ahead: 0 inside a zone,
/// capped at `range`.
pub fn sign_distance(view: &EgoView<'_>, s: f64, range: f64) -> f64 {
    let signs = view.scenario.ego_signs();
    let mut active = false;
    let mut next = None;
    for sign in &signs {
        match sign.kind {
            SignKind::NoOvertakingStart if sign.s <= s => active = true,
            SignKind::NoOvertakingEnd if sign.s <= s => active = false,
            SignKind::NoOvertakingStart => {
                next = Some(sign.s);
                break;
            }
            SignKind::NoOvertakingEnd => {}
        }
    }
    if active {
        return 0.0;
    }
    next.map_or(range, |n| (n - s).min(range))
}

/// Builds the graph around the ego state of `view`.
pub fn build_graph(view: &EgoView<'_>, params: &GraphParams) -> Result<TrafficGraph, CriticError> {
    let road = view.road;
    let ego = view.state;
    if ![ego.position.x, ego.position.y, ego.velocity.x, ego.velocity.y].iter().all(|v| v.is_finite()) {
        return Err(CriticError::State("ego state is not finite".into()));
    }
    let mut others: Vec<(f64, &VehicleState)> = view
        .scenario
        .vehicles_at(view.step)
        .filter(|s| road.carries(s))
        .map(|s| ((s.position.x - ego.position.x).hypot(s.position.y - ego.position.y), s))
        .filter(|(dist, _)| *dist <= params.sensor_radius)
        .collect();
    others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
    let mut members: Vec<&VehicleState> = vec![ego];
    members.extend(others.iter().map(|(_, s)| *s));

    let n = members.len();
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let (a, b) = (members[i].position, members[j].position);
            let dist = (a.x - b.x).hypot(a.y - b.y);
            if dist < params.edge_radius {
                pairs.push((dist, i, j));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut degree = vec![0usize; n];
    let mut links = Vec::new();
    for (dist, i, j) in pairs {
        if degree[i] < params.neighbors && degree[j] < params.neighbors {
            degree[i] += 1;
            degree[j] += 1;
            links.push((dist, i, j));
        }
    }

    // Keep the ego's connected component only.
    let mut adj = vec![Vec::new(); n];
    for &(_, i, j) in &links {
        adj[i].push(j);
        adj[j].push(i);
    }
    let mut seen = vec![false; n];
    seen[0] = true;
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for &v in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    // Kept vehicles stay in (distance, id) order.
    let order: Vec<usize> = (0..n).filter(|&i| seen[i]).collect();
    let mut remap = vec![usize::MAX; n];
    for (new, &old) in order.iter().enumerate() {
        remap[old] = new;
    }

    // Ego frame: x along the ego heading, y to its left, independent of the native axes.
    let fps: Vec<_> = members.iter().map(|s| road.footprint(s)).collect();
    let heading = fps[0].heading;
    let lanes: Vec<usize> = fps.iter().map(|f| road.nearest_lane(f.d).index).collect();
    let nodes = order
        .iter()
        .map(|&i| {
            let rel = rotate(Vec2::new(fps[i].s - fps[0].s, fps[i].d - fps[0].d), heading);
            [norm_position(rel.x), norm_position(rel.y), norm_velocity(members[i].velocity.norm()), lanes[i] as f64]
        })
        .collect();
    let ids = order.iter().map(|&i| members[i].id).collect();

    let mut edges = Vec::with_capacity(2 * links.len());
    for &(dist, i, j) in &links {
        if remap[i] == usize::MAX {
            continue;
        }
        for (src, dst) in [(i, j), (j, i)] {
            let (fa, fb) = (&fps[src], &fps[dst]);
            let rp = rotate(Vec2::new(fa.s - fb.s, fa.d - fb.d), heading);
            let rv = rotate(Vec2::new(fa.s_dot - fb.s_dot, fa.d_dot - fb.d_dot), heading);
            let overlap = fa.front().min(fb.front()) - fa.rear().max(fb.rear());
            let left_of = lanes[src] > lanes[dst] && overlap > 0.0;
            edges.push(Edge {
                src: remap[src],
                dst: remap[dst],
                length: dist,
                features: [
                    norm_position(rp.x),
                    norm_position(rp.y),
                    norm_relative_velocity(rv.x),
                    norm_relative_velocity(rv.y),
                    if left_of { 1.0 } else { 0.0 },
                    if lanes[src] == lanes[dst] { 1.0 } else { 0.0 },
                ],
            });
        }
    }
    edges.sort_by_key(|e| (e.dst, e.src));

    let fp = &fps[0];
    let lane = road.nearest_lane(fp.d);
    let lb = lane.d_left - fp.d;
    let rb = fp.d - lane.d_right;
    let lrb = road.left_bound() - fp.d;
    let rrb = fp.d - road.right_bound();
    let (sin, cos) = ego.heading.sin_cos();
    let a_long = ego.acceleration.x * cos + ego.acceleration.y * sin;
    let ego_features = [
        norm_acceleration(a_long),
        norm_velocity(ego.velocity.norm()),
        norm_yaw_rate(view.yaw_rate),
        norm_lane_bound(lb),
        norm_lane_bound(rb),
        norm_road_bound(lrb, lb),
        norm_road_bound(rrb, rb),
        norm_heading_error(fp.heading),
        signed_log(view.goal.d - fp.d),
        signed_log(view.goal.s - fp.s),
        lane.index as f64,
        norm_sign_distance(sign_distance(view, fp.s, params.sign_range)),
    ];
    let graph = TrafficGraph { nodes, ids, edges, ego: ego_features };
    if graph.nodes.iter().flatten().chain(graph.ego.iter()).any(|v| !v.is_finite()) {
        return Err(CriticError::State("graph features are not finite".into()));
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_normalisations() {
        assert_eq!(norm_velocity(35.0), 1.0);
        assert_eq!(norm_sign_distance(0.0), -1.0);
        assert_eq!(norm_sign_distance(100.0), 1.0);
        assert_eq!(signed_log(0.0), 0.0);
        assert!((signed_log(-(std::f64::consts::E - 1.0)) + 1.0).abs() < 1e-12);
        assert_eq!(norm_yaw_rate(3.0), 1.0);
        assert_eq!(norm_heading_error(-2.0), -std::f64::consts::FRAC_PI_4);
        assert_eq!(norm_road_bound(5.0, 1.0), 0.5);
        assert_eq!(norm_position(25.0), 0.5);
        assert_eq!(norm_acceleration(-4.0), -0.2);
    }
}
