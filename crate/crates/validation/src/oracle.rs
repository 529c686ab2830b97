//! Boolean semantics of the traffic predicates and rule bodies, written
//! without reference to the quantitative monitor. Answers are `None` where a
//! lookback reaches before the ego track; once only looks at samples that
//! have an answer.

use rulecritic::rules::{Formula, Predicate, RuleId, Term};
use rulecritic::scenario::{Footprint, Road, RoadLane, SignKind};
use rulecritic::VehicleId;

pub use rulecritic::rules::EgoTrack;
use rulecritic::rules::RuleParams;
use rulecritic::Scenario;

pub struct Oracle<'a> {
    pub scenario: &'a Scenario,
    pub road: Road,
    pub ego: &'a EgoTrack,
    pub params: &'a RuleParams,
}

fn overlaps(fp: &Footprint, lane: &RoadLane) -> bool {
    fp.left() > lane.d_right && fp.right() < lane.d_left
}

impl<'a> Oracle<'a> {
    pub fn new(scenario: &'a Scenario, ego: &'a EgoTrack, params: &'a RuleParams) -> Self {
        let road = scenario.road().expect("oracle needs a valid road");
        Self { scenario, road, ego, params }
    }

    /// Lane index by distance from `d` to each lane interval.
    fn lane_index(&self, d: f64) -> usize {
        let gap = |l: &RoadLane| (l.d_right - d).max(d - l.d_left).max(0.0);
        let mut best = 0;
        for (i, l) in self.road.lanes.iter().enumerate() {
            if gap(l) < gap(&self.road.lanes[best]) {
                best = i;
            }
        }
        best
    }

    /// Footprint of a present vehicle; `Err(())` if the ego is asked for
    /// before its track starts.
    fn fp(&self, id: VehicleId, step: usize) -> Result<Option<Footprint>, ()> {
        if id == VehicleId::EGO {
            if step < self.ego.start_step {
                return Err(());
            }
            return Ok(self.ego.state_at(step).map(|s| self.road.footprint(s)));
        }
        Ok(self
            .scenario
            .vehicle_at(id, step)
            .filter(|s| self.road.lane_by_id(s.lane_id).is_some())
            .map(|s| self.road.footprint(s)))
    }

    pub fn others(&self, step: usize) -> Vec<VehicleId> {
        self.scenario
            .vehicles_at(step)
            .filter(|s| self.road.lane_by_id(s.lane_id).is_some())
            .map(|s| s.id)
            .collect()
    }

    fn in_zone(&self, s: f64) -> bool {
        let signs = self.scenario.ego_signs();
        let range = self.params.sign_detection_range;
        signs.iter().enumerate().any(|(i, sign)| {
            if sign.kind != SignKind::NoOvertakingStart {
                return false;
            }
            let end = signs[i + 1..]
                .iter()
                .find(|x| x.kind == SignKind::NoOvertakingEnd)
                .map_or(self.road.s_max, |x| x.s);
            s > sign.s - range && s < end
        })
    }

    fn queue(&self, x: VehicleId, fx: Footprint, step: usize, speed: f64) -> bool {
        let n = self.params.congestion.min_vehicles;
        let lane = self.lane_index(fx.d);
        let mut members: Vec<(f64, VehicleId, Footprint)> = self
            .others(step)
            .into_iter()
            .filter_map(|id| self.fp(id, step).ok().flatten().map(|f| (f.s, id, f)))
            .filter(|(_, _, f)| self.lane_index(f.d) == lane)
            .collect();
        if x == VehicleId::EGO {
            members.push((fx.s, x, fx));
        }
        members.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let Some(pos) = members.iter().position(|m| m.1 == x) else { return false };
        if members.len() < n {
            return false;
        }
        (0..=members.len() - n).filter(|j| *j <= pos && pos < j + n).any(|j| {
            let w = &members[j..j + n];
            w.iter().all(|m| m.2.s_dot < speed)
                && w.windows(2).all(|p| p[1].2.rear() - p[0].2.front() < self.params.congestion.max_gap)
        })
    }

    /// Truth of a predicate; `None` where it is undefined.
    pub fn predicate(&self, pred: Predicate, args: &[VehicleId], step: usize) -> Option<bool> {
        let a = args[0];
        if pred == Predicate::CutIn {
            let ego = args[1];
            if step <= self.ego.start_step {
                return None;
            }
            let fe = self.fp(ego, step).ok()?;
            let now = self.fp(a, step).ok()?;
            let before = self.fp(a, step - 1).ok()?;
            let (Some(fe), Some(now), Some(before)) = (fe, now, before) else { return Some(false) };
            let lane = &self.road.lanes[self.lane_index(fe.d)];
            return Some(overlaps(&now, lane) && !overlaps(&before, lane) && now.rear() > fe.front());
        }
        let Some(fa) = self.fp(a, step).ok()? else { return Some(false) };
        let c = &self.params.congestion;
        let unary = match pred {
            Predicate::NoOvertakingSign => Some(self.in_zone(fa.s)),
            Predicate::InRightmostLane => {
                let l = self.road.rightmost();
                Some((fa.d - l.d_center).abs() < l.width / 2.0)
            }
            Predicate::InCongestion => Some(self.queue(a, fa, step, c.congestion_speed)),
            Predicate::InSlowMovingTraffic => Some(self.queue(a, fa, step, c.slow_speed)),
            Predicate::InQueueOfVehicles => Some(self.queue(a, fa, step, c.queue_speed)),
            _ => None,
        };
        if unary.is_some() {
            return unary;
        }
        let Some(fb) = self.fp(args[1], step).ok()? else { return Some(false) };
        Some(match pred {
            Predicate::InSameLane => self.road.lanes.iter().any(|l| overlaps(&fa, l) && overlaps(&fb, l)),
            Predicate::InFrontOf => fb.rear() > fa.front(),
            Predicate::KeepsSafeDistancePrec => {
                let sd = &self.params.safe_distance;
                let ve = if fa.s_dot > 0.0 { fa.s_dot } else { 0.0 };
                let vp = if fb.s_dot > 0.0 { fb.s_dot } else { 0.0 };
                let needed = ve * sd.delta + (ve * ve - vp * vp) / (-2.0 * sd.a_min);
                fb.rear() - fa.front() > needed
            }
            Predicate::LeftOf => {
                self.lane_index(fa.d) > self.lane_index(fb.d)
                    && fa.front().min(fb.front()) > fa.rear().max(fb.rear())
            }
            Predicate::DrivesFaster => fa.s_dot > fb.s_dot,
            _ => unreachable!("all predicates covered"),
        })
    }

    /// Truth of `formula` at scenario step `step` with `x0` bound to `var`.
    pub fn formula(&self, formula: &Formula, var: Option<VehicleId>, step: usize) -> Option<bool> {
        let local = step.checked_sub(self.ego.start_step)?;
        self.eval(formula, var, local)
    }

    fn eval(&self, f: &Formula, var: Option<VehicleId>, t: usize) -> Option<bool> {
        match f {
            Formula::Predicate(atom) => {
                let pred = Predicate::parse(&atom.name)?;
                let ids: Vec<VehicleId> = atom
                    .args
                    .iter()
                    .map(|a| match a {
                        Term::Ego => VehicleId::EGO,
                        Term::Var => var.expect("quantified variable bound"),
                        Term::Vehicle(id) => *id,
                    })
                    .collect();
                self.predicate(pred, &ids, self.ego.start_step + t)
            }
            Formula::Not(g) => self.eval(g, var, t).map(|b| !b),
            Formula::And(gs) => {
                let mut all = true;
                for g in gs {
                    all &= self.eval(g, var, t)?;
                }
                Some(all)
            }
            Formula::Or(gs) => {
                let mut any = false;
                for g in gs {
                    any |= self.eval(g, var, t)?;
                }
                Some(any)
            }
            Formula::Implies(a, b) => {
                let (a, b) = (self.eval(a, var, t)?, self.eval(b, var, t)?);
                Some(!a || b)
            }
            Formula::Globally(g) => {
                let mut all = true;
                for k in t..self.ego.states.len() {
                    all &= self.eval(g, var, k)?;
                }
                Some(all)
            }
            Formula::Once { lo, hi, arg } => {
                let dt = self.scenario.timestep;
                let mut any = false;
                for k in (0..=t).rev() {
                    let back = (t - k) as f64;
                    if back + 1e-9 >= lo / dt && back <= hi / dt + 1e-9 {
                        any |= self.eval(arg, var, k).unwrap_or(false);
                    }
                }
                Some(any)
            }
            Formula::Previous(g) => self.eval(g, var, t.checked_sub(1)?),
        }
    }

    /// Truth of a rule body at `step`, universally quantified where the rule is.
    pub fn rule(&self, rule: RuleId, step: usize) -> Option<bool> {
        let body = rule.body(self.params);
        if !rule.quantified() {
            return self.formula(&body, None, step);
        }
        let mut all = true;
        for id in self.others(step) {
            all &= self.formula(&body, Some(id), step)?;
        }
        Some(all)
    }
}
