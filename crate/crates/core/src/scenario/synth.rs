//! Seeded synthetic highway traffic, a desk-scale stand-in for recorded data.

use std::collections::BTreeMap;

use rand::Rng;

use super::{
    Direction, EgoConfig, Lane, LaneNetwork, Scenario, ScenarioError, SignKind, Track,
    TrafficSign, Vec2, VehicleId, VehicleState, YAxis, SIM_TIMESTEP,
};
use crate::seed;

/// A leader that brakes; vehicles behind it in the same lane follow suit
/// after a reaction delay, one delay per position in the queue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrakingEvent {
    pub time: f64,
    pub deceleration: f64,
    pub final_speed: f64,
    pub reaction_delay: f64,
}

impl Default for BrakingEvent {
    fn default() -> Self {
        Self { time: 10.0, deceleration: 4.0, final_speed: 8.0, reaction_delay: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub lanes: usize,
    pub lane_width: f64,
    pub road_length: f64,
    pub vehicles: usize,
    pub speed_range: (f64, f64),
    pub duration: f64,
    /// Bumper-to-bumper spacing enforced within a lane at t = 0.
    pub min_gap: f64,
    pub truck_fraction: f64,
    pub braking: Option<BrakingEvent>,
    /// Number of vehicles that change to an adjacent lane during the run.
    pub lane_changes: usize,
    pub lane_change_duration: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            lanes: 3,
            lane_width: 3.5,
            road_length: 500.0,
            vehicles: 8,
            speed_range: (12.0, 28.0),
            duration: 40.0,
            min_gap: 20.0,
            truck_fraction: 0.2,
            braking: None,
            lane_changes: 0,
            lane_change_duration: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Plan {
    lane: usize,
    s0: f64,
    v0: f64,
    length: f64,
    width: f64,
    /// (start time, deceleration, final speed)
    brake: Option<(f64, f64, f64)>,
    /// (start time, target lane)
    change: Option<(f64, usize)>,
}

impl Plan {
    fn speed_and_position(&self, t: f64) -> (f64, f64, f64) {
        let Some((tb, a, vf)) = self.brake else {
            return (self.v0, self.s0 + self.v0 * t, 0.0);
        };
        if t <= tb || vf >= self.v0 {
            return (self.v0, self.s0 + self.v0 * t, 0.0);
        }
        let te = tb + (self.v0 - vf) / a;
        let s_b = self.s0 + self.v0 * tb;
        if t <= te {
            let dt = t - tb;
            (self.v0 - a * dt, s_b + self.v0 * dt - 0.5 * a * dt * dt, -a)
        } else {
            let de = te - tb;
            let s_e = s_b + self.v0 * de - 0.5 * a * de * de;
            (vf, s_e + vf * (t - te), 0.0)
        }
    }
}

/// Smooth lateral transition: position, velocity and acceleration fractions.
fn quintic_blend(u: f64) -> (f64, f64, f64) {
    let u = u.clamp(0.0, 1.0);
    let p = 10.0 * u.powi(3) - 15.0 * u.powi(4) + 6.0 * u.powi(5);
    let dp = 30.0 * u.powi(2) - 60.0 * u.powi(3) + 30.0 * u.powi(4);
    let ddp = 60.0 * u - 180.0 * u.powi(2) + 120.0 * u.powi(3);
    (p, dp, ddp)
}

/// Generates a straight multi-lane road with constant-speed or braking traffic.
/// The result depends only on `(spec, seed)`.
pub fn generate_synthetic_scenario(spec: &SynthSpec, seed_value: u64) -> Result<Scenario, ScenarioError> {
    if spec.lanes == 0 {
        return Err(ScenarioError::Generation("lane count must be at least 1".into()));
    }
    if !(spec.duration > 0.0) || !(spec.road_length > 0.0) || !(spec.lane_width > 0.0) {
        return Err(ScenarioError::Generation("duration, road length and lane width must be positive".into()));
    }
    let (v_lo, v_hi) = spec.speed_range;
    if !(0.0 <= v_lo && v_lo <= v_hi) {
        return Err(ScenarioError::Generation("invalid speed range".into()));
    }
    let mut rng = seed::derived_rng(seed_value, seed::tags::SYNTH);

    // Vehicles are spawned over half a road length upstream as well, so that
    // traffic keeps entering during the run.
    let spawn_min = -0.5 * spec.road_length;
    let spawn_len = 1.5 * spec.road_length;
    let max_len = 16.0;
    let slot = max_len + spec.min_gap;
    let per_lane = (spawn_len / slot).floor() as usize;
    if spec.vehicles > per_lane * spec.lanes {
        return Err(ScenarioError::Generation(format!(
            "{} vehicles do not fit on {} lanes at a {} m minimum gap",
            spec.vehicles, spec.lanes, spec.min_gap
        )));
    }

    let mut counts = vec![0usize; spec.lanes];
    for _ in 0..spec.vehicles {
        let open: Vec<usize> = (0..spec.lanes).filter(|&l| counts[l] < per_lane).collect();
        let lane = open[rng.random_range(0..open.len())];
        counts[lane] += 1;
    }

    let mut plans: Vec<Plan> = Vec::with_capacity(spec.vehicles);
    for (lane, &n) in counts.iter().enumerate() {
        if n == 0 {
            continue;
        }
        // Gap-preserving placement: sorted uniforms in the slack, shifted by one slot each.
        let slack = spawn_len - n as f64 * slot;
        let mut offsets: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=slack.max(0.0))).collect();
        offsets.sort_by(f64::total_cmp);
        let mut lane_plans: Vec<Plan> = offsets
            .iter()
            .enumerate()
            .map(|(i, off)| {
                let truck = rng.random_bool(spec.truck_fraction.clamp(0.0, 1.0));
                let (length, width) = if truck {
                    (rng.random_range(12.0..max_len), 2.5)
                } else {
                    (rng.random_range(4.0..5.0), 1.8)
                };
                let v0 = if v_hi > v_lo { rng.random_range(v_lo..v_hi) } else { v_lo };
                Plan {
                    lane,
                    s0: spawn_min + off + i as f64 * slot + 0.5 * max_len,
                    v0,
                    length,
                    width,
                    brake: None,
                    change: None,
                }
            })
            .collect();
        // Downstream vehicles are never slower than the ones behind them.
        for i in (0..n.saturating_sub(1)).rev() {
            lane_plans[i].v0 = lane_plans[i].v0.min(lane_plans[i + 1].v0);
        }
        plans.extend(lane_plans);
    }

    if let Some(ev) = spec.braking {
        if !(ev.deceleration > 0.0) || ev.reaction_delay < 0.0 {
            return Err(ScenarioError::Generation("braking needs positive deceleration".into()));
        }
        let busy: Vec<usize> = (0..spec.lanes).filter(|&l| counts[l] >= 2).collect();
        if !busy.is_empty() {
            let lane = busy[rng.random_range(0..busy.len())];
            let mut idx: Vec<usize> = (0..plans.len()).filter(|&i| plans[i].lane == lane).collect();
            // Leader: the vehicle in the lane that is closest to the road centre at
            // braking time, so the event happens on the road.
            let mid = 0.5 * spec.road_length;
            idx.sort_by(|&a, &b| plans[b].s0.total_cmp(&plans[a].s0));
            let leader_pos = (0..idx.len().saturating_sub(1))
                .min_by(|&a, &b| {
                    let pa = plans[idx[a]].speed_and_position(ev.time).1;
                    let pb = plans[idx[b]].speed_and_position(ev.time).1;
                    (pa - mid).abs().total_cmp(&(pb - mid).abs())
                })
                .unwrap_or(0);
            for (rank, &i) in idx[leader_pos..].iter().enumerate() {
                let vf = ev.final_speed.min(plans[i].v0);
                plans[i].brake = Some((ev.time + rank as f64 * ev.reaction_delay, ev.deceleration, vf));
            }
        }
    }

    for _ in 0..spec.lane_changes.min(plans.len()) {
        let i = rng.random_range(0..plans.len());
        let lane = plans[i].lane;
        let mut targets = Vec::new();
        if lane > 0 {
            targets.push(lane - 1);
        }
        if lane + 1 < spec.lanes {
            targets.push(lane + 1);
        }
        if targets.is_empty() || plans[i].change.is_some() {
            continue;
        }
        let target = targets[rng.random_range(0..targets.len())];
        let latest = (spec.duration - spec.lane_change_duration - 1.0).max(1.0);
        let start = rng.random_range(1.0..=latest);
        plans[i].change = Some((start, target));
    }

    let num_steps = (spec.duration / SIM_TIMESTEP).round() as usize;
    let mut tracks = BTreeMap::new();
    for (k, plan) in plans.iter().enumerate() {
        let id = VehicleId(k as u32 + 1);
        let mut start_step = None;
        let mut states = Vec::new();
        for step in 0..num_steps {
            let t = step as f64 * SIM_TIMESTEP;
            let (v, s, a) = plan.speed_and_position(t);
            let present = s >= 0.0 && s <= spec.road_length;
            if !present {
                if start_step.is_some() {
                    break;
                }
                continue;
            }
            start_step.get_or_insert(step);
            let base = plan.lane as f64 * spec.lane_width;
            let (mut d, mut d_dot, mut d_ddot) = (base, 0.0, 0.0);
            if let Some((tc, target)) = plan.change {
                let delta = (target as f64 - plan.lane as f64) * spec.lane_width;
                let dur = spec.lane_change_duration;
                let (p, dp, ddp) = quintic_blend((t - tc) / dur);
                d = base + delta * p;
                if t > tc && t < tc + dur {
                    d_dot = delta * dp / dur;
                    d_ddot = delta * ddp / (dur * dur);
                }
            }
            let lane_index = ((d / spec.lane_width) + 0.5).floor().clamp(0.0, (spec.lanes - 1) as f64) as i32;
            states.push(VehicleState {
                id,
                position: Vec2::new(s, d),
                velocity: Vec2::new(v, d_dot),
                acceleration: Vec2::new(a, d_ddot),
                heading: d_dot.atan2(v.max(1e-9)),
                length: plan.length,
                width: plan.width,
                lane_id: lane_index + 1,
            });
        }
        if let Some(start_step) = start_step {
            tracks.insert(id, Track { id, start_step, states });
        }
    }

    let lanes = (0..spec.lanes)
        .map(|i| Lane {
            id: i as i32 + 1,
            center: i as f64 * spec.lane_width,
            width: spec.lane_width,
            x_min: 0.0,
            x_max: spec.road_length,
            direction: Direction::Forward,
        })
        .collect();
    let scenario = Scenario {
        timestep: SIM_TIMESTEP,
        num_steps,
        tracks,
        lanes: LaneNetwork { lanes, y_axis: YAxis::Up },
        signs: Vec::new(),
        ego: EgoConfig {
            direction: Direction::Forward,
            start_window: (150.0_f64.min(spec.road_length), 350.0_f64.min(spec.road_length)),
            start_speed: 15.0,
            goal_s: spec.road_length,
        },
    };
    scenario.validate()?;
    Ok(scenario)
}

/// Lower and upper bound of the longitudinal sign position.
pub const SIGN_RANGE: (f64, f64) = (100.0, 350.0);

/// Adds one no-overtaking start sign at `s ~ Uniform[100, 350]`.
pub fn insert_no_overtaking_sign(scenario: &Scenario, rng_seed: u64) -> Result<Scenario, ScenarioError> {
    let road = scenario.road()?;
    let (lo, hi) = SIGN_RANGE;
    if road.s_min > lo || road.s_max < hi {
        return Err(ScenarioError::Range(format!(
            "lane extent [{}, {}] does not cover [{lo}, {hi}] m",
            road.s_min, road.s_max
        )));
    }
    let mut rng = seed::derived_rng(rng_seed, seed::tags::SIGN);
    let s = rng.random_range(lo..=hi);
    Ok(with_sign_at(scenario, s))
}

/// Adds a no-overtaking start sign at a fixed position.
pub fn with_sign_at(scenario: &Scenario, s: f64) -> Scenario {
    let mut out = scenario.clone();
    out.signs.push(TrafficSign { kind: SignKind::NoOvertakingStart, s, direction: scenario.ego.direction });
    out
}
