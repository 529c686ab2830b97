use rulecritic::critic::ModelParams;
use rulecritic::planner::PlannerParams;
use rulecritic::rules::{EgoTrack, RuleId, RuleParams};
use rulecritic::scenario::{
    generate_synthetic_scenario, insert_no_overtaking_sign, FrenetPoint, Road, SynthSpec, Track,
};
use rulecritic::train::{
    train_phase, EnvironmentParams, LearningParams, TrainError, TrainOutcome, TrainSetup, TrainingParams,
};
use rulecritic::{Scenario, VehicleId, VehicleState};

/// The desk-scale training set: ten default synthetic scenarios, each with
/// a no-overtaking sign.
pub fn desk_scenarios() -> Vec<Scenario> {
    (0..10)
        .map(|i| {
            let sc = generate_synthetic_scenario(&SynthSpec::default(), i).expect("synthetic scenario");
            insert_no_overtaking_sign(&sc, i).expect("sign insertion")
        })
        .collect()
}

/// Trains one phase with every default except phase, step budget and seed.
pub fn train_desk(scenarios: &[Scenario], phase: RuleId, steps: usize, seed: u64) -> Result<TrainOutcome, TrainError> {
    let env = EnvironmentParams::default();
    let planner = PlannerParams::default();
    let rules = RuleParams::default();
    let model = ModelParams::default();
    let learning = LearningParams::default();
    let training = TrainingParams { phase, total_steps: steps, ..TrainingParams::default() };
    let setup = TrainSetup {
        scenarios,
        env: &env,
        planner: &planner,
        rules: &rules,
        model: &model,
        learning: &learning,
        training: &training,
        seed,
    };
    train_phase(&setup, |_, _| Ok(()))
}

/// Straight three-lane road with no traffic.
pub fn empty_road(seed: u64) -> Scenario {
    generate_synthetic_scenario(&SynthSpec { vehicles: 0, ..SynthSpec::default() }, seed).expect("empty road")
}

/// Constant-velocity vehicle in road coordinates.
#[derive(Debug, Clone, Copy)]
pub struct Cruiser {
    pub s: f64,
    pub d: f64,
    pub speed: f64,
    pub length: f64,
    pub width: f64,
}

impl Cruiser {
    pub fn car(s: f64, d: f64, speed: f64) -> Self {
        Self { s, d, speed, length: 4.5, width: 1.8 }
    }

    pub fn state(&self, road: &Road, id: VehicleId, t: f64) -> VehicleState {
        let p = road.cartesian_of(FrenetPoint { s: self.s + self.speed * t, d: self.d });
        let v = road.velocity_from_frenet(self.speed, 0.0);
        VehicleState {
            id,
            position: p,
            velocity: v,
            acceleration: road.velocity_from_frenet(0.0, 0.0),
            heading: road.heading_from_road(0.0),
            length: self.length,
            width: self.width,
            lane_id: road.nearest_lane(self.d).id,
        }
    }

    pub fn states(&self, road: &Road, id: VehicleId, dt: f64, n: usize) -> Vec<VehicleState> {
        (0..n).map(|k| self.state(road, id, k as f64 * dt)).collect()
    }
}

/// `base` with its traffic replaced by constant-velocity vehicles present
/// for the whole scenario.
pub fn with_cruisers(base: &Scenario, others: &[Cruiser]) -> Scenario {
    let road = base.road().expect("road");
    let mut sc = base.clone();
    sc.tracks.clear();
    for (i, c) in others.iter().enumerate() {
        let id = VehicleId(i as u32 + 1);
        sc.tracks.insert(id, Track { id, start_step: 0, states: c.states(&road, id, sc.timestep, sc.num_steps) });
    }
    sc
}

/// Ego track of a cruiser from step 0 for `n` steps.
pub fn ego_track(sc: &Scenario, ego: Cruiser, n: usize) -> EgoTrack {
    let road = sc.road().expect("road");
    EgoTrack::new(0, ego.states(&road, VehicleId::EGO, sc.timestep, n))
}
