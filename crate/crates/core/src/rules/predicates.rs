//! Geometric predicates over a scenario and an ego track.
//!
//! Every predicate returns a signed margin that is strictly positive exactly
//! when its Boolean reading holds. Distances are in metres, speeds in m/s.

use super::stl::{Atom, Signals};
use super::{resolve, RuleError, RuleParams};
use crate::scenario::{Footprint, Road, RoadLane, Scenario, SignKind, VehicleId, VehicleState};

/// Robustness of a predicate whose vehicle (or sign) does not exist.
pub const ABSENT: f64 = -1e6;
/// Robustness of a universal quantifier over no vehicles.
pub const EMPTY_QUANTIFIER: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Predicate {
    InSameLane,
    InFrontOf,
    KeepsSafeDistancePrec,
    CutIn,
    LeftOf,
    DrivesFaster,
    InCongestion,
    InSlowMovingTraffic,
    InQueueOfVehicles,
    NoOvertakingSign,
    InRightmostLane,
}

impl Predicate {
    pub const ALL: [Predicate; 11] = [
        Predicate::InSameLane,
        Predicate::InFrontOf,
        Predicate::KeepsSafeDistancePrec,
        Predicate::CutIn,
        Predicate::LeftOf,
        Predicate::DrivesFaster,
        Predicate::InCongestion,
        Predicate::InSlowMovingTraffic,
        Predicate::InQueueOfVehicles,
        Predicate::NoOvertakingSign,
        Predicate::InRightmostLane,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Predicate::InSameLane => "in_same_lane",
            Predicate::InFrontOf => "in_front_of",
            Predicate::KeepsSafeDistancePrec => "keeps_safe_distance_prec",
            Predicate::CutIn => "cut_in",
            Predicate::LeftOf => "left_of",
            Predicate::DrivesFaster => "drives_faster",
            Predicate::InCongestion => "in_congestion",
            Predicate::InSlowMovingTraffic => "in_slow_moving_traffic",
            Predicate::InQueueOfVehicles => "in_queue_of_vehicles",
            Predicate::NoOvertakingSign => "no_overtaking_sign",
            Predicate::InRightmostLane => "in_rightmost_lane",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    pub fn arity(self) -> usize {
        match self {
            Predicate::InCongestion
            | Predicate::InSlowMovingTraffic
            | Predicate::InQueueOfVehicles
            | Predicate::NoOvertakingSign
            | Predicate::InRightmostLane => 1,
            _ => 2,
        }
    }
}

/// Ego states on the scenario grid, starting at `start_step`.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoTrack {
    pub start_step: usize,
    pub states: Vec<VehicleState>,
}

impl EgoTrack {
    pub fn new(start_step: usize, states: Vec<VehicleState>) -> Self {
        Self { start_step, states }
    }

    pub fn end_step(&self) -> usize {
        self.start_step + self.states.len()
    }

    pub fn state_at(&self, step: usize) -> Option<&VehicleState> {
        step.checked_sub(self.start_step).and_then(|i| self.states.get(i))
    }

    pub fn last(&self) -> Option<&VehicleState> {
        self.states.last()
    }
}

/// A scenario seen from the ego vehicle, ready for predicate evaluation.
#[derive(Debug, Clone)]
pub struct World<'a> {
    pub scenario: &'a Scenario,
    pub road: Road,
    pub ego: &'a EgoTrack,
    pub params: &'a RuleParams,
    /// No-overtaking zones as `[start, end]` in road arc length.
    zones: Vec<(f64, f64)>,
}

impl<'a> World<'a> {
    pub fn new(scenario: &'a Scenario, ego: &'a EgoTrack, params: &'a RuleParams) -> Result<Self, RuleError> {
        let road = scenario.road()?;
        Self::with_road(scenario, road, ego, params)
    }

    pub fn with_road(
        scenario: &'a Scenario,
        road: Road,
        ego: &'a EgoTrack,
        params: &'a RuleParams,
    ) -> Result<Self, RuleError> {
        if ego.states.is_empty() {
            return Err(RuleError::EmptyEgoTrack);
        }
        let zones = no_overtaking_zones(scenario, &road);
        Ok(Self { scenario, road, ego, params, zones })
    }

    pub fn zones(&self) -> &[(f64, f64)] {
        &self.zones
    }

    /// Index into the ego track for a scenario step.
    pub fn local_step(&self, step: usize) -> Result<usize, RuleError> {
        match step.checked_sub(self.ego.start_step) {
            Some(i) if i < self.ego.states.len() => Ok(i),
            Some(_) => Err(RuleError::OutOfRange { step, len: self.ego.end_step() }),
            None => Err(RuleError::InvalidTimestep { step }),
        }
    }

    /// Ids of other vehicles on the ego carriageway at `step`.
    pub fn others_at(&self, step: usize) -> impl Iterator<Item = VehicleId> + '_ {
        self.scenario.vehicles_at(step).filter(|s| self.road.carries(s)).map(|s| s.id)
    }

    pub(crate) fn bind(&self, binding: Option<VehicleId>) -> Bound<'_, 'a> {
        Bound { world: self, binding }
    }

    fn state(&self, id: VehicleId, step: usize) -> Result<Option<&VehicleState>, RuleError> {
        if id == VehicleId::EGO {
            if step < self.ego.start_step {
                return Err(RuleError::InvalidTimestep { step });
            }
            return Ok(self.ego.state_at(step));
        }
        Ok(self.scenario.vehicle_at(id, step).filter(|s| self.road.carries(s)))
    }

    fn footprint(&self, id: VehicleId, step: usize) -> Result<Option<Footprint>, RuleError> {
        Ok(self.state(id, step)?.map(|s| self.road.footprint(s)))
    }

    /// Evaluates a registered predicate by name.
    pub fn eval_predicate(&self, name: &str, args: &[VehicleId], step: usize) -> Result<f64, RuleError> {
        let pred = Predicate::parse(name).ok_or_else(|| RuleError::UnknownPredicate(name.to_string()))?;
        if args.len() != pred.arity() {
            return Err(RuleError::Arity { name: name.to_string(), expected: pred.arity() });
        }
        self.eval(pred, args, step)
    }

    pub fn eval(&self, pred: Predicate, args: &[VehicleId], step: usize) -> Result<f64, RuleError> {
        let a = args[0];
        match pred {
            Predicate::CutIn => return self.cut_in(a, args[1], step),
            Predicate::NoOvertakingSign => {
                return Ok(match self.footprint(a, step)? {
                    Some(fp) => self.sign_margin(fp.s),
                    None => ABSENT,
                })
            }
            _ => {}
        }
        let Some(fa) = self.footprint(a, step)? else { return Ok(ABSENT) };
        if pred.arity() == 1 {
            return Ok(match pred {
                Predicate::InRightmostLane => {
                    let lane = self.road.rightmost();
                    0.5 * lane.width - (fa.d - lane.d_center).abs()
                }
                Predicate::InCongestion => self.cluster(a, fa, step, self.params.congestion.congestion_speed),
                Predicate::InSlowMovingTraffic => self.cluster(a, fa, step, self.params.congestion.slow_speed),
                Predicate::InQueueOfVehicles => self.cluster(a, fa, step, self.params.congestion.queue_speed),
                _ => unreachable!("unary predicates handled above"),
            });
        }
        let Some(fb) = self.footprint(args[1], step)? else { return Ok(ABSENT) };
        Ok(match pred {
            Predicate::InSameLane => self
                .road
                .lanes
                .iter()
                .map(|l| lane_overlap(&fa, l).min(lane_overlap(&fb, l)))
                .fold(f64::NEG_INFINITY, f64::max),
            Predicate::InFrontOf => fb.rear() - fa.front(),
            Predicate::KeepsSafeDistancePrec => {
                let sd = &self.params.safe_distance;
                let brake = 2.0 * sd.a_min.abs();
                let (ve, vp) = (fa.s_dot.max(0.0), fb.s_dot.max(0.0));
                let d_safe = ve * sd.delta + ve * ve / brake - vp * vp / brake;
                fb.rear() - fa.front() - d_safe
            }
            Predicate::LeftOf => {
                let la = self.road.nearest_lane(fa.d);
                let lb = self.road.nearest_lane(fb.d);
                let lateral = (la.index as f64 - lb.index as f64 - 0.5) * lb.width;
                let longitudinal = fa.front().min(fb.front()) - fa.rear().max(fb.rear());
                lateral.min(longitudinal)
            }
            Predicate::DrivesFaster => fa.s_dot - fb.s_dot,
            _ => unreachable!("binary predicates handled above"),
        })
    }

    /// `x` enters the ego lane at `step`: it overlaps the lane now, did not one
    /// step earlier, and is ahead of the ego.
    fn cut_in(&self, x: VehicleId, ego: VehicleId, step: usize) -> Result<f64, RuleError> {
        if step <= self.ego.start_step {
            return Err(RuleError::InvalidTimestep { step });
        }
        let Some(fe) = self.footprint(ego, step)? else { return Ok(ABSENT) };
        let (Some(now), Some(before)) = (self.footprint(x, step)?, self.footprint(x, step - 1)?) else {
            return Ok(ABSENT);
        };
        let lane = self.road.nearest_lane(fe.d);
        let lead = now.rear() - fe.front();
        Ok(lane_overlap(&now, lane).min(-lane_overlap(&before, lane)).min(lead))
    }

    fn sign_margin(&self, s: f64) -> f64 {
        let range = self.params.sign_detection_range;
        self.zones
            .iter()
            .map(|&(start, end)| (s - (start - range)).min(end - s))
            .fold(ABSENT, f64::max)
    }

    /// Best margin over windows of `min_vehicles` consecutive same-lane
    /// vehicles containing `x`: every speed below `speed` and every gap
    /// below the configured maximum.
    fn cluster(&self, x: VehicleId, fx: Footprint, step: usize, speed: f64) -> f64 {
        let n = self.params.congestion.min_vehicles;
        let lane = self.road.nearest_lane(fx.d).index;
        let mut members: Vec<(VehicleId, Footprint)> = self
            .scenario
            .vehicles_at(step)
            .filter(|s| self.road.carries(s))
            .map(|s| (s.id, self.road.footprint(s)))
            .filter(|(_, f)| self.road.nearest_lane(f.d).index == lane)
            .collect();
        if x == VehicleId::EGO {
            members.push((x, fx));
        }
        members.sort_by(|a, b| a.1.s.total_cmp(&b.1.s).then(a.0.cmp(&b.0)));
        if members.len() < n {
            return members.len() as f64 - n as f64;
        }
        let Some(pos) = members.iter().position(|(id, _)| *id == x) else { return ABSENT };
        let first = pos.saturating_sub(n - 1);
        let last = pos.min(members.len() - n);
        let max_gap = self.params.congestion.max_gap;
        (first..=last)
            .map(|j| {
                let w = &members[j..j + n];
                let top_speed = w.iter().map(|(_, f)| f.s_dot).fold(f64::NEG_INFINITY, f64::max);
                let widest = w.windows(2).map(|p| p[1].1.rear() - p[0].1.front()).fold(f64::NEG_INFINITY, f64::max);
                (speed - top_speed).min(max_gap - widest)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Signed lateral encroachment of a footprint into a lane; positive iff they overlap.
pub(crate) fn lane_overlap(fp: &Footprint, lane: &RoadLane) -> f64 {
    (fp.left() - lane.d_right).min(lane.d_left - fp.right())
}

fn no_overtaking_zones(scenario: &Scenario, road: &Road) -> Vec<(f64, f64)> {
    let signs = scenario.ego_signs();
    let mut zones = Vec::new();
    for (i, sign) in signs.iter().enumerate() {
        if sign.kind != SignKind::NoOvertakingStart {
            continue;
        }
        let end = signs[i + 1..]
            .iter()
            .find(|s| s.kind == SignKind::NoOvertakingEnd)
            .map(|s| s.s)
            .unwrap_or(road.s_max);
        zones.push((sign.s, end));
    }
    zones
}

/// Predicate signals of a world with the quantified variable bound.
pub(crate) struct Bound<'w, 'a> {
    world: &'w World<'a>,
    binding: Option<VehicleId>,
}

impl Signals for Bound<'_, '_> {
    fn timestep(&self) -> f64 {
        self.world.scenario.timestep
    }

    fn len(&self) -> usize {
        self.world.ego.states.len()
    }

    fn value(&self, atom: &Atom, local: usize) -> Result<f64, RuleError> {
        let pred = Predicate::parse(&atom.name).ok_or_else(|| RuleError::UnknownPredicate(atom.name.clone()))?;
        if atom.args.len() != pred.arity() {
            return Err(RuleError::Arity { name: atom.name.clone(), expected: pred.arity() });
        }
        let mut ids = [VehicleId::EGO; 2];
        for (slot, term) in ids.iter_mut().zip(&atom.args) {
            *slot = resolve(*term, self.binding).ok_or_else(|| RuleError::Unbound(atom.to_string()))?;
        }
        self.world.eval(pred, &ids[..atom.args.len()], self.world.ego.start_step + local)
    }
}
