use super::{wrap_angle, Direction, LaneNetwork, ScenarioError, Vec2, VehicleState};

/// Road-aligned coordinates: `s` along the straight reference line (the
/// rightmost lane centre), `d` lateral offset, positive to the left.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrenetPoint {
    pub s: f64,
    pub d: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadLane {
    pub id: i32,
    /// 0 for the rightmost lane, counting leftwards.
    pub index: usize,
    pub d_center: f64,
    pub width: f64,
    pub d_right: f64,
    pub d_left: f64,
}

/// The carriageway of one driving direction, seen in Frenet coordinates.
///
/// All left/right decisions are made here from lane metadata: `left_sign`
/// maps native y offsets to leftward-positive lateral offsets and folds in
/// both the direction of travel and the orientation of the native y axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Road {
    pub direction: Direction,
    pub left_sign: f64,
    pub ref_y: f64,
    /// Sorted right to left.
    pub lanes: Vec<RoadLane>,
    pub s_min: f64,
    pub s_max: f64,
}

/// Axis-aligned extent of a vehicle in the road frame plus its Frenet velocity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Footprint {
    pub s: f64,
    pub d: f64,
    pub half_s: f64,
    pub half_d: f64,
    pub s_dot: f64,
    pub d_dot: f64,
    /// Heading relative to the road direction.
    pub heading: f64,
}

impl Footprint {
    pub fn front(&self) -> f64 {
        self.s + self.half_s
    }

    pub fn rear(&self) -> f64 {
        self.s - self.half_s
    }

    pub fn right(&self) -> f64 {
        self.d - self.half_d
    }

    pub fn left(&self) -> f64 {
        self.d + self.half_d
    }
}

impl Road {
    pub fn new(network: &LaneNetwork, direction: Direction) -> Result<Road, ScenarioError> {
        let left_sign = direction.sign() * network.y_axis.sign();
        let mut lanes: Vec<_> = network.lanes.iter().filter(|l| l.direction == direction).collect();
        if lanes.is_empty() {
            return Err(ScenarioError::Invalid(format!(
                "no lanes for direction {}",
                direction.as_str()
            )));
        }
        lanes.sort_by(|a, b| (a.center * left_sign).total_cmp(&(b.center * left_sign)));
        let ref_y = lanes[0].center;
        let mut s_min = f64::INFINITY;
        let mut s_max = f64::NEG_INFINITY;
        let road_lanes = lanes
            .iter()
            .enumerate()
            .map(|(index, lane)| {
                let (a, b) = (lane.x_min * direction.sign(), lane.x_max * direction.sign());
                s_min = s_min.min(a.min(b));
                s_max = s_max.max(a.max(b));
                let d_center = (lane.center - ref_y) * left_sign;
                RoadLane {
                    id: lane.id,
                    index,
                    d_center,
                    width: lane.width,
                    d_right: d_center - 0.5 * lane.width,
                    d_left: d_center + 0.5 * lane.width,
                }
            })
            .collect();
        Ok(Road { direction, left_sign, ref_y, lanes: road_lanes, s_min, s_max })
    }

    /// Frenet coordinates of a native position, rejecting points farther than
    /// one lane width outside the road.
    pub fn frenet_of(&self, position: Vec2) -> Result<FrenetPoint, ScenarioError> {
        let p = self.frenet_unchecked(position);
        let margin = self.lanes.iter().map(|l| l.width).fold(0.0, f64::max);
        let lateral_ok = p.d >= self.right_bound() - margin && p.d <= self.left_bound() + margin;
        let longitudinal_ok = p.s >= self.s_min - margin && p.s <= self.s_max + margin;
        if lateral_ok && longitudinal_ok {
            Ok(p)
        } else {
            Err(ScenarioError::OutOfDomain { x: position.x, y: position.y })
        }
    }

    pub fn frenet_unchecked(&self, position: Vec2) -> FrenetPoint {
        FrenetPoint {
            s: position.x * self.direction.sign(),
            d: (position.y - self.ref_y) * self.left_sign,
        }
    }

    pub fn cartesian_of(&self, p: FrenetPoint) -> Vec2 {
        Vec2::new(p.s * self.direction.sign(), self.ref_y + p.d * self.left_sign)
    }

    pub fn velocity_to_frenet(&self, v: Vec2) -> (f64, f64) {
        (v.x * self.direction.sign(), v.y * self.left_sign)
    }

    pub fn velocity_from_frenet(&self, s_dot: f64, d_dot: f64) -> Vec2 {
        Vec2::new(s_dot * self.direction.sign(), d_dot * self.left_sign)
    }

    /// Native heading to road-relative heading.
    pub fn heading_to_road(&self, heading: f64) -> f64 {
        let (sin, cos) = heading.sin_cos();
        (sin * self.left_sign).atan2(cos * self.direction.sign())
    }

    pub fn heading_from_road(&self, heading: f64) -> f64 {
        let (sin, cos) = heading.sin_cos();
        wrap_angle((sin * self.left_sign).atan2(cos * self.direction.sign()))
    }

    pub fn right_bound(&self) -> f64 {
        self.lanes[0].d_right
    }

    pub fn left_bound(&self) -> f64 {
        self.lanes[self.lanes.len() - 1].d_left
    }

    pub fn rightmost(&self) -> &RoadLane {
        &self.lanes[0]
    }

    /// Lane whose half-open interval `[d_right, d_left)` contains `d`.
    pub fn lane_at(&self, d: f64) -> Option<&RoadLane> {
        self.lanes.iter().find(|l| d >= l.d_right && d < l.d_left)
    }

    pub fn nearest_lane(&self, d: f64) -> &RoadLane {
        self.lane_at(d).unwrap_or_else(|| {
            if d < self.right_bound() {
                &self.lanes[0]
            } else {
                &self.lanes[self.lanes.len() - 1]
            }
        })
    }

    pub fn lane_by_id(&self, id: i32) -> Option<&RoadLane> {
        self.lanes.iter().find(|l| l.id == id)
    }

    /// True when the lane metadata says this vehicle drives on this carriageway.
    pub fn carries(&self, state: &VehicleState) -> bool {
        self.lane_by_id(state.lane_id).is_some()
    }

    pub fn footprint(&self, state: &VehicleState) -> Footprint {
        let p = self.frenet_unchecked(state.position);
        let heading = self.heading_to_road(state.heading);
        let (sin, cos) = heading.sin_cos();
        let (s_dot, d_dot) = self.velocity_to_frenet(state.velocity);
        Footprint {
            s: p.s,
            d: p.d,
            half_s: 0.5 * (cos.abs() * state.length + sin.abs() * state.width),
            half_d: 0.5 * (sin.abs() * state.length + cos.abs() * state.width),
            s_dot,
            d_dot,
            heading,
        }
    }
}
