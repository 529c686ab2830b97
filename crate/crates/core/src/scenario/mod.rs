//! Highway scenario data model.
//!
//! A [`Scenario`] holds straight parallel lanes, recorded vehicle tracks on a
//! fixed time grid, traffic signs and the ego start/goal configuration.
//! Positions stay in the coordinate frame they were recorded in; all
//! left/right reasoning goes through [`Road`], which is built from the lane
//! metadata for one driving direction.

mod archive;
mod geometry;
mod highd;
mod synth;

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

pub use archive::{read_archive, write_archive, ARCHIVE_MAGIC};
pub use geometry::{Footprint, FrenetPoint, Road, RoadLane};
pub use highd::{parse_tracks_csv, write_tracks_csv, IngestOptions};
pub use synth::{
    generate_synthetic_scenario, insert_no_overtaking_sign, with_sign_at, BrakingEvent, SynthSpec, SIGN_RANGE,
};

/// Simulation interval used by the environment, in seconds.
pub const SIM_TIMESTEP: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("format error: {0}")]
    Format(String),
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("data error for vehicle {id} at frame {frame}: {reason}")]
    Data { id: u32, frame: i64, reason: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("position ({x}, {y}) is outside the road domain")]
    OutOfDomain { x: f64, y: f64 },
    #[error("generation error: {0}")]
    Generation(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VehicleId(pub u32);

impl VehicleId {
    /// Reserved id for the ego vehicle, never used by recorded tracks.
    pub const EGO: VehicleId = VehicleId(u32::MAX);
}

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == VehicleId::EGO {
            f.write_str("ego")
        } else {
            write!(f, "{}", self.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }
}

/// Direction of travel along the x axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Forward => "forward",
            Direction::Backward => "backward",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim() {
            "forward" | "1" | "+1" => Some(Direction::Forward),
            "backward" | "-1" => Some(Direction::Backward),
            _ => None,
        }
    }
}

/// Orientation of the native y axis. highD images have y pointing down.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YAxis {
    Up,
    Down,
}

impl YAxis {
    pub fn sign(self) -> f64 {
        match self {
            YAxis::Up => 1.0,
            YAxis::Down => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            YAxis::Up => "up",
            YAxis::Down => "down",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim() {
            "up" => Some(YAxis::Up),
            "down" => Some(YAxis::Down),
            _ => None,
        }
    }
}

/// Kinematic state of one vehicle at one instant, in the native frame.
/// `position` is the centre of the bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub id: VehicleId,
    pub position: Vec2,
    pub velocity: Vec2,
    pub acceleration: Vec2,
    /// Radians in (-pi, pi], measured in the native frame.
    pub heading: f64,
    pub length: f64,
    pub width: f64,
    pub lane_id: i32,
}

/// One vehicle's presence interval on the scenario grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: VehicleId,
    pub start_step: usize,
    pub states: Vec<VehicleState>,
}

impl Track {
    pub fn end_step(&self) -> usize {
        self.start_step + self.states.len()
    }

    pub fn state_at(&self, step: usize) -> Option<&VehicleState> {
        step.checked_sub(self.start_step).and_then(|i| self.states.get(i))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignKind {
    NoOvertakingStart,
    NoOvertakingEnd,
}

impl SignKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SignKind::NoOvertakingStart => "no_overtaking_start",
            SignKind::NoOvertakingEnd => "no_overtaking_end",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text {
            "no_overtaking_start" => Some(SignKind::NoOvertakingStart),
            "no_overtaking_end" => Some(SignKind::NoOvertakingEnd),
            _ => None,
        }
    }
}

/// A traffic sign at longitudinal position `s` of the road for `direction`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrafficSign {
    pub kind: SignKind,
    pub s: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Lane {
    pub id: i32,
    /// Native y coordinate of the centre line.
    pub center: f64,
    pub width: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub direction: Direction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneNetwork {
    pub lanes: Vec<Lane>,
    pub y_axis: YAxis,
}

impl LaneNetwork {
    pub fn lane(&self, id: i32) -> Option<&Lane> {
        self.lanes.iter().find(|l| l.id == id)
    }

    /// Checks widths and that lanes of one direction do not overlap.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        for lane in &self.lanes {
            if !(lane.width > 0.0) || !lane.center.is_finite() || !(lane.x_max > lane.x_min) {
                return Err(ScenarioError::Invalid(format!("lane {} has invalid geometry", lane.id)));
            }
        }
        for (i, a) in self.lanes.iter().enumerate() {
            for b in &self.lanes[i + 1..] {
                if a.id == b.id {
                    return Err(ScenarioError::Invalid(format!("duplicate lane id {}", a.id)));
                }
                let gap = (a.center - b.center).abs() - 0.5 * (a.width + b.width);
                if gap < -1e-9 {
                    return Err(ScenarioError::Invalid(format!(
                        "lanes {} and {} overlap",
                        a.id, b.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Ego start and goal settings shared by every episode on a scenario.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoConfig {
    pub direction: Direction,
    /// Start distance window before the goal, metres.
    pub start_window: (f64, f64),
    pub start_speed: f64,
    /// Goal position as arc length along the road of `direction`.
    pub goal_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub timestep: f64,
    pub num_steps: usize,
    pub tracks: BTreeMap<VehicleId, Track>,
    pub lanes: LaneNetwork,
    pub signs: Vec<TrafficSign>,
    pub ego: EgoConfig,
}

impl Scenario {
    /// Road frame for the ego driving direction.
    pub fn road(&self) -> Result<Road, ScenarioError> {
        Road::new(&self.lanes, self.ego.direction)
    }

    pub fn duration(&self) -> f64 {
        self.num_steps as f64 * self.timestep
    }

    /// States of all vehicles present at `step`, in id order.
    pub fn vehicles_at(&self, step: usize) -> impl Iterator<Item = &VehicleState> {
        self.tracks.values().filter_map(move |t| t.state_at(step))
    }

    pub fn vehicle_at(&self, id: VehicleId, step: usize) -> Option<&VehicleState> {
        self.tracks.get(&id).and_then(|t| t.state_at(step))
    }

    /// Signs applying to the ego direction, sorted by `s`.
    pub fn ego_signs(&self) -> Vec<TrafficSign> {
        let mut signs: Vec<_> =
            self.signs.iter().copied().filter(|s| s.direction == self.ego.direction).collect();
        signs.sort_by(|a, b| a.s.total_cmp(&b.s));
        signs
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !(self.timestep > 0.0) || !self.timestep.is_finite() {
            return Err(ScenarioError::Invalid("timestep must be positive".into()));
        }
        self.lanes.validate()?;
        let road = self.road()?;
        let (lo, hi) = self.ego.start_window;
        if !(0.0 <= lo && lo <= hi) {
            return Err(ScenarioError::Invalid("ego start window is inverted".into()));
        }
        if self.ego.goal_s - hi < road.s_min - 1e-9 || self.ego.goal_s > road.s_max + 1e-9 {
            return Err(ScenarioError::Invalid(
                "ego start window or goal outside the lane extent".into(),
            ));
        }
        for track in self.tracks.values() {
            if track.end_step() > self.num_steps {
                return Err(ScenarioError::Invalid(format!(
                    "track {} exceeds the scenario length",
                    track.id
                )));
            }
            for st in &track.states {
                if !(st.length > 0.0 && st.width > 0.0) {
                    return Err(ScenarioError::Invalid(format!(
                        "vehicle {} has non-positive dimensions",
                        track.id
                    )));
                }
                if self.lanes.lane(st.lane_id).is_none() {
                    return Err(ScenarioError::Invalid(format!(
                        "vehicle {} references unknown lane {}",
                        track.id, st.lane_id
                    )));
                }
            }
        }
        let mut open = false;
        for sign in self.ego_signs() {
            match sign.kind {
                SignKind::NoOvertakingStart => open = true,
                SignKind::NoOvertakingEnd if !open => {
                    return Err(ScenarioError::Invalid(format!(
                        "no-overtaking end sign at {} without a preceding start",
                        sign.s
                    )))
                }
                SignKind::NoOvertakingEnd => open = false,
            }
        }
        Ok(())
    }

    /// Resamples all tracks onto a grid of `timestep` seconds by linear
    /// interpolation. Lane ids follow the earlier of the two bracketing samples.
    pub fn resample(&self, timestep: f64) -> Result<Scenario, ScenarioError> {
        if !(timestep > 0.0) {
            return Err(ScenarioError::Invalid("resampling timestep must be positive".into()));
        }
        if (timestep - self.timestep).abs() < 1e-12 {
            return Ok(self.clone());
        }
        let old = self.timestep;
        let eps = 1e-9;
        let mut tracks = BTreeMap::new();
        let mut num_steps = 0;
        for (id, track) in &self.tracks {
            let t0 = track.start_step as f64 * old;
            let t1 = (track.end_step() - 1) as f64 * old;
            let first = ((t0 - eps) / timestep).ceil().max(0.0) as usize;
            let last = ((t1 + eps) / timestep).floor() as usize;
            if last < first {
                continue;
            }
            let mut states = Vec::with_capacity(last - first + 1);
            for k in first..=last {
                let pos = (k as f64 * timestep - t0) / old;
                let i = (pos + eps).floor().max(0.0) as usize;
                let i = i.min(track.states.len() - 1);
                let frac = (pos - i as f64).clamp(0.0, 1.0);
                let a = &track.states[i];
                let st = if frac < eps || i + 1 >= track.states.len() {
                    *a
                } else {
                    interpolate(a, &track.states[i + 1], frac)
                };
                states.push(st);
            }
            num_steps = num_steps.max(last + 1);
            tracks.insert(*id, Track { id: *id, start_step: first, states });
        }
        let horizon = (((self.num_steps.max(1) - 1) as f64 * old + eps) / timestep).floor() as usize + 1;
        Ok(Scenario {
            timestep,
            num_steps: num_steps.max(horizon),
            tracks,
            lanes: self.lanes.clone(),
            signs: self.signs.clone(),
            ego: self.ego,
        })
    }
}

fn lerp(a: f64, b: f64, f: f64) -> f64 {
    a + (b - a) * f
}

fn interpolate(a: &VehicleState, b: &VehicleState, f: f64) -> VehicleState {
    let dh = wrap_angle(b.heading - a.heading);
    VehicleState {
        id: a.id,
        position: Vec2::new(lerp(a.position.x, b.position.x, f), lerp(a.position.y, b.position.y, f)),
        velocity: Vec2::new(lerp(a.velocity.x, b.velocity.x, f), lerp(a.velocity.y, b.velocity.y, f)),
        acceleration: Vec2::new(
            lerp(a.acceleration.x, b.acceleration.x, f),
            lerp(a.acceleration.y, b.acceleration.y, f),
        ),
        heading: wrap_angle(a.heading + dh * f),
        length: a.length,
        width: a.width,
        lane_id: a.lane_id,
    }
}

/// Wraps an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let mut r = a.rem_euclid(2.0 * PI);
    if r > PI {
        r -= 2.0 * PI;
    }
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(x: f64) -> VehicleState {
        VehicleState {
            id: VehicleId(1),
            position: Vec2::new(x, 0.0),
            velocity: Vec2::new(25.0, 0.0),
            acceleration: Vec2::default(),
            heading: 0.0,
            length: 4.0,
            width: 1.8,
            lane_id: 1,
        }
    }

    fn scenario_at(timestep: f64, n: usize) -> Scenario {
        let states = (0..n).map(|i| state(i as f64 * 25.0 * timestep)).collect();
        let mut tracks = BTreeMap::new();
        tracks.insert(VehicleId(1), Track { id: VehicleId(1), start_step: 0, states });
        Scenario {
            timestep,
            num_steps: n,
            tracks,
            lanes: LaneNetwork {
                lanes: vec![Lane {
                    id: 1,
                    center: 0.0,
                    width: 3.5,
                    x_min: 0.0,
                    x_max: 500.0,
                    direction: Direction::Forward,
                }],
                y_axis: YAxis::Up,
            },
            signs: vec![],
            ego: EgoConfig {
                direction: Direction::Forward,
                start_window: (150.0, 350.0),
                start_speed: 15.0,
                goal_s: 500.0,
            },
        }
    }

    #[test]
    fn resample_25hz_to_10hz_interpolates_linearly() {
        let sc = scenario_at(0.04, 26); // 1 s of data
        let re = sc.resample(0.1).unwrap();
        let track = &re.tracks[&VehicleId(1)];
        assert_eq!(track.states.len(), 11);
        for (k, st) in track.states.iter().enumerate() {
            assert!((st.position.x - 2.5 * k as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn overlapping_lanes_rejected() {
        let mut sc = scenario_at(0.1, 2);
        sc.lanes.lanes.push(Lane { id: 2, center: 3.0, ..sc.lanes.lanes[0] });
        assert!(sc.validate().is_err());
    }
}
