use rayon::prelude::*;

use super::{EvalError, EvalGrid, GridSpec};
use crate::critic::{EgoView, StateValue};
use crate::planner::{FrenetState, TrajectoryState};
use crate::rules::{rule_robustness, EgoTrack, RuleError, RuleId, RuleParams, World};
use crate::scenario::{FrenetPoint, Road, Scenario, VehicleState};
use crate::train::history_steps;

/// The ego placed into each cell: lane-aligned, constant speed, no yaw
/// rate or acceleration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EgoTemplate {
    pub speed: f64,
    pub length: f64,
    pub width: f64,
}

impl EgoTemplate {
    pub fn new(speed: f64) -> Self {
        Self { speed, length: 4.5, width: 1.8 }
    }
}

pub fn ego_at(road: &Road, p: FrenetPoint, template: &EgoTemplate) -> VehicleState {
    let f = FrenetState::cruise(p.s, p.d, template.speed);
    TrajectoryState::from_frenet(0.0, f, road).vehicle_state(road, template.length, template.width)
}

fn check_step(scenario: &Scenario, step: usize) -> Result<(), EvalError> {
    if step >= scenario.num_steps {
        return Err(EvalError::Invalid(format!("step {step} outside a scenario of {} steps", scenario.num_steps)));
    }
    Ok(())
}

/// Evaluates `f` at every on-road cell centre in parallel.
fn fill<F>(mut grid: EvalGrid, road: &Road, f: F) -> Result<EvalGrid, EvalError>
where
    F: Fn(FrenetPoint) -> Result<Option<f64>, EvalError> + Sync,
{
    let cols = grid.cols;
    let on_road = |p: FrenetPoint| {
        p.d >= road.right_bound() && p.d <= road.left_bound() && p.s >= road.s_min && p.s <= road.s_max
    };
    let g = &grid;
    let values = (0..grid.values.len())
        .into_par_iter()
        .map(|i| {
            let p = g.center(i / cols, i % cols);
            if on_road(p) {
                f(p)
            } else {
                Ok(None)
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    grid.values = values;
    Ok(grid)
}

/// State value of the ego template in every cell, other vehicles frozen at
/// `step`. The goal is the downstream end of the ego's current lane. Cells
/// where no graph can be built are masked.
pub fn value_heatmap(
    critic: &dyn StateValue,
    scenario: &Scenario,
    step: usize,
    template: &EgoTemplate,
    spec: GridSpec,
) -> Result<EvalGrid, EvalError> {
    check_step(scenario, step)?;
    let road = scenario.road()?;
    let grid = EvalGrid::covering(&road, spec, "value", template.speed)?;
    fill(grid, &road, |p| {
        let state = ego_at(&road, p, template);
        let goal = FrenetPoint { s: scenario.ego.goal_s, d: road.nearest_lane(p.d).d_center };
        let view = EgoView { scenario, road: &road, state: &state, yaw_rate: 0.0, goal, step };
        Ok(critic.state_value(&view).ok().filter(|v| v.is_finite()))
    })
}

/// Instantaneous body robustness of `rule` with the ego in every cell.
///
/// The ego is given a constant-speed history in its row so lookback
/// operators see no manoeuvre; if `step` is too early for that history the
/// grid comes back fully masked.
pub fn robustness_heatmap(
    rule: RuleId,
    scenario: &Scenario,
    step: usize,
    template: &EgoTemplate,
    rules: &RuleParams,
    spec: GridSpec,
) -> Result<EvalGrid, EvalError> {
    check_step(scenario, step)?;
    let road = scenario.road()?;
    let grid = EvalGrid::covering(&road, spec, &format!("robustness {rule}"), template.speed)?;
    let hist = history_steps(rules, scenario.timestep).min(step);
    let dt = scenario.timestep;
    fill(grid, &road, |p| {
        let states = (0..=hist)
            .map(|k| {
                let back = template.speed * (hist - k) as f64 * dt;
                ego_at(&road, FrenetPoint { s: p.s - back, d: p.d }, template)
            })
            .collect();
        let track = EgoTrack::new(step - hist, states);
        let world = World::with_road(scenario, road.clone(), &track, rules)?;
        match rule_robustness(rule, &world, step) {
            Ok(v) => Ok(Some(v)),
            Err(RuleError::InvalidTimestep { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::critic::{Critic, ModelParams};
    use crate::scenario::{generate_synthetic_scenario, with_sign_at, SynthSpec};

    fn empty_road() -> Scenario {
        let spec = SynthSpec { vehicles: 0, ..SynthSpec::default() };
        generate_synthetic_scenario(&spec, 3).unwrap()
    }

    #[test]
    fn zero_critic_gives_zero_grid() {
        let sc = empty_road();
        let model = ModelParams { hidden: 4, embed: 4, head: vec![4], ..ModelParams::default() };
        let g = value_heatmap(&Critic::zeros(&model), &sc, 10, &EgoTemplate::new(25.0), GridSpec::default()).unwrap();
        assert!(g.values.iter().flatten().all(|v| *v == 0.0));
        assert!(g.values.iter().any(|v| v.is_some()));
        // Rows centred outside the carriageway are masked.
        assert!(g.values[..g.cols].iter().all(|v| v.is_none()));
    }

    #[test]
    fn i6_right_lane_positive_in_zone() {
        let sc = with_sign_at(&empty_road(), 300.0);
        let rules = RuleParams::default();
        let g = robustness_heatmap(RuleId::I6, &sc, 40, &EgoTemplate::new(25.0), &rules, GridSpec::default()).unwrap();
        let right = g.row_of(0.0).unwrap();
        let left = g.row_of(7.0).unwrap();
        for c in 0..g.cols {
            let s = g.center(right, c).s;
            if s > 250.0 {
                assert!(g.get(right, c).unwrap() > 0.0, "right lane at s = {s}");
                assert!(g.get(left, c).unwrap() < 0.0, "left lane at s = {s}");
            } else if s < 249.0 {
                assert!(g.get(left, c).unwrap() > 0.0, "left lane before range at s = {s}");
            }
        }
    }

    #[test]
    fn g1_defined_and_negative_behind_vehicle() {
        let spec = SynthSpec { vehicles: 1, speed_range: (20.0, 20.0), ..SynthSpec::default() };
        let sc = generate_synthetic_scenario(&spec, 4).unwrap();
        let road = sc.road().unwrap();
        // A step where the vehicle has 70 m of road behind it.
        let (step, other) = (40..sc.num_steps)
            .find_map(|t| {
                let fp = road.footprint(sc.vehicles_at(t).next()?);
                (fp.rear() > road.s_min + 70.0 && fp.front() < road.s_max).then_some((t, fp))
            })
            .unwrap();
        let rules = RuleParams::default();
        let g = robustness_heatmap(RuleId::G1, &sc, step, &EgoTemplate::new(25.0), &rules, GridSpec::default()).unwrap();
        let row = g.row_of(other.d).unwrap();
        let behind = (0..g.cols).rev().find(|c| g.center(row, *c).s < other.rear() - 4.0).unwrap();
        assert!(g.get(row, behind).unwrap() < 0.0);
        // Far behind, the gap is safe.
        let far = (0..g.cols).rev().find(|c| g.center(row, *c).s < other.rear() - 60.0).unwrap();
        assert!(g.get(row, far).unwrap() > 0.0);
        assert!(g.values.iter().filter(|v| v.is_some()).count() > g.cols * 8);
    }

    #[test]
    fn rejects_step_past_end() {
        let sc = empty_road();
        let r = robustness_heatmap(
            RuleId::I2,
            &sc,
            sc.num_steps,
            &EgoTemplate::new(25.0),
            &RuleParams::default(),
            GridSpec::default(),
        );
        assert!(matches!(r, Err(EvalError::Invalid(_))));
    }
}
