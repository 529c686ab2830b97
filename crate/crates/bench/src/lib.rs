//! Shared fixtures for the benchmarks.

use rulecritic::critic::{Critic, ModelParams};
use rulecritic::planner::PlannerParams;
use rulecritic::rules::{RuleId, RuleParams};
use rulecritic::scenario::{generate_synthetic_scenario, insert_no_overtaking_sign, Road, Scenario, SynthSpec};
use rulecritic::train::{EnvContext, EnvironmentParams, Episode};

pub struct Fixture {
    pub scenario: Scenario,
    pub road: Road,
    pub env: EnvironmentParams,
    pub planner: PlannerParams,
    pub rules: RuleParams,
    pub critic: Critic,
}

impl Fixture {
    /// Default synthetic traffic with a no-overtaking sign and a freshly
    /// initialised full-size critic.
    pub fn new(seed: u64) -> Self {
        let sc = generate_synthetic_scenario(&SynthSpec::default(), seed).expect("synthetic scenario");
        let scenario = insert_no_overtaking_sign(&sc, seed).expect("sign insertion");
        let road = scenario.road().expect("road");
        Self {
            scenario,
            road,
            env: EnvironmentParams::default(),
            planner: PlannerParams::default(),
            rules: RuleParams::default(),
            critic: Critic::new(&ModelParams::default(), seed),
        }
    }

    pub fn ctx(&self) -> EnvContext<'_> {
        EnvContext {
            scenario: &self.scenario,
            road: &self.road,
            env: &self.env,
            planner: &self.planner,
            rules: &self.rules,
            phase: RuleId::I6,
            rule_weight: 10.0,
            progression_weight: 8.0,
        }
    }

    /// Episode in the right lane, 200 m before the goal.
    pub fn episode(&self) -> Episode {
        let ctx = self.ctx();
        let s0 = (self.scenario.ego.goal_s - 200.0).max(self.road.s_min);
        Episode::start(&ctx, 40, s0, 0, 0).expect("episode start")
    }
}
