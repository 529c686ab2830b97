//! Small randomized scenarios with a freely drifting ego, for cross-checking
//! the monitor against the oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rulecritic::rules::{EgoTrack, RuleParams};
use rulecritic::scenario::{
    generate_synthetic_scenario, BrakingEvent, FrenetPoint, SignKind, SynthSpec, TrafficSign,
};
use rulecritic::{Scenario, VehicleId, VehicleState};

pub struct MiniCase {
    pub scenario: Scenario,
    pub ego: EgoTrack,
    pub params: RuleParams,
}

/// A short scenario: slow or mixed traffic with tight gaps, lane changes and
/// signs, plus an ego that may change lanes and speed.
pub fn mini_case(seed: u64) -> MiniCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let slow = rng.random_bool(0.5);
        let spec = SynthSpec {
            lanes: rng.random_range(1..=3),
            road_length: rng.random_range(150.0..300.0),
            vehicles: rng.random_range(0..=7),
            speed_range: if slow { (1.0, 13.0) } else { (8.0, 30.0) },
            duration: rng.random_range(1.5..3.5),
            min_gap: rng.random_range(1.0..25.0),
            truck_fraction: 0.2,
            braking: rng.random_bool(0.3).then(|| BrakingEvent {
                time: rng.random_range(0.2..1.5),
                deceleration: 6.0,
                final_speed: 2.0,
                reaction_delay: 0.3,
            }),
            lane_changes: rng.random_range(0..=3),
            lane_change_duration: rng.random_range(0.8..2.5),
            ..SynthSpec::default()
        };
        let Ok(mut scenario) = generate_synthetic_scenario(&spec, rng.random()) else { continue };
        let road = scenario.road().expect("synthetic road");
        let direction = scenario.ego.direction;
        for _ in 0..rng.random_range(0..=2) {
            let kind = if rng.random_bool(0.75) { SignKind::NoOvertakingStart } else { SignKind::NoOvertakingEnd };
            let s = rng.random_range(road.s_min..road.s_max);
            scenario.signs.push(TrafficSign { kind, s, direction });
        }

        let start = rng.random_range(0..5.min(scenario.num_steps - 1));
        let n = scenario.num_steps - start;
        let mut s = rng.random_range(road.s_min + 10.0..road.s_max - 40.0);
        let lane = &road.lanes[rng.random_range(0..road.lanes.len())];
        let mut d = lane.d_center + rng.random_range(-0.8..0.8);
        let mut v: f64 = if slow { rng.random_range(0.0..14.0) } else { rng.random_range(5.0..32.0) };
        let d_dot = if rng.random_bool(0.5) { rng.random_range(-2.0..2.0) } else { 0.0 };
        let a = rng.random_range(-3.0..2.0);
        let dt = scenario.timestep;
        let mut states = Vec::with_capacity(n);
        for _ in 0..n {
            let p = road.cartesian_of(FrenetPoint { s, d });
            let vel = road.velocity_from_frenet(v, d_dot);
            states.push(VehicleState {
                id: VehicleId::EGO,
                position: p,
                velocity: vel,
                acceleration: road.velocity_from_frenet(a, 0.0),
                heading: vel.y.atan2(vel.x),
                length: 4.5,
                width: 1.8,
                lane_id: road.nearest_lane(d).id,
            });
            s += v * dt;
            d += d_dot * dt;
            v = (v + a * dt).max(0.0);
        }
        let mut params = RuleParams::default();
        params.cutin.t_c = rng.random_range(0.3..3.0);
        params.sign_detection_range = rng.random_range(0.0..80.0);
        return MiniCase { scenario, ego: EgoTrack::new(start, states), params };
    }
}
