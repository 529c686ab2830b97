//! Critic training with the planner as the actor.
//!
//! Each update round collects a fixed number of simulation steps with the
//! current critic inside the planner cost, turns the rewards into Monte Carlo
//! returns (bootstrapped where a segment is cut) and regresses the critic
//! onto them.

mod buffer;
mod env;
mod metrics;
mod reward;
mod update;

use std::collections::VecDeque;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use buffer::{compute_returns, RolloutBuffer, Transition};
pub use env::{history_steps, EnvContext, EnvironmentParams, Episode, StepResult, Termination};
pub use metrics::{episode_reward_mean, explained_variance, write_metrics_csv, RoundMetrics, METRICS_HEADER};
pub use reward::{reward_progression, reward_rule, RewardParts};
pub use update::update_critic;

use crate::critic::{Adam, AdamParams, Critic, CriticError, ModelParams, StateValue};
use crate::planner::{PlannerError, PlannerParams};
use crate::rules::{RuleError, RuleId, RuleParams};
use crate::scenario::{Road, Scenario, ScenarioError};
use crate::seed;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training scenarios")]
    NoScenarios,
    #[error("every scenario was skipped after repeated planner failures")]
    AllScenariosSkipped,
    #[error("episode start: {0}")]
    Start(String),
    #[error("non-finite training loss {0}")]
    NonFiniteLoss(f64),
    #[error("invalid training setup: {0}")]
    Invalid(String),
    #[error("metrics output: {0}")]
    Csv(String),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Critic(#[from] CriticError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningParams {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for LearningParams {
    fn default() -> Self {
        let a = AdamParams::default();
        Self {
            lr: a.lr,
            weight_decay: a.weight_decay,
            beta1: a.beta1,
            beta2: a.beta2,
            eps: a.eps,
            gamma: 0.99,
            epochs: 8,
            batch_size: 32,
        }
    }
}

impl LearningParams {
    pub fn adam(&self) -> AdamParams {
        AdamParams { lr: self.lr, weight_decay: self.weight_decay, beta1: self.beta1, beta2: self.beta2, eps: self.eps }
    }

    pub fn validate(&self) -> Result<(), String> {
        self.adam().validate()?;
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err("learning.gamma must lie in [0, 1]".into());
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err("learning.epochs and batch_size must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingParams {
    /// Rule whose robustness is rewarded.
    pub phase: RuleId,
    pub total_steps: usize,
    pub rollout_steps: usize,
    pub rule_weight: f64,
    pub progression_weight: f64,
    /// Consecutive failed episodes after which a scenario is dropped.
    pub max_planner_failures: usize,
    /// Environments stepped side by side; must divide `rollout_steps`.
    pub parallel_envs: usize,
    /// Completed episodes averaged by the logged episode reward mean.
    pub reward_window: usize,
}

impl Default for TrainingParams {
    fn default() -> Self {
        Self {
            phase: RuleId::I6,
            total_steps: 2000,
            rollout_steps: 256,
            rule_weight: 10.0,
            progression_weight: 8.0,
            max_planner_failures: 3,
            parallel_envs: 8,
            reward_window: 100,
        }
    }
}

impl TrainingParams {
    /// Full rollout buffers that fit into `total_steps`.
    pub fn rounds(&self) -> usize {
        self.total_steps / self.rollout_steps.max(1)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.rollout_steps == 0 || self.max_planner_failures == 0 {
            return Err("training.rollout_steps and max_planner_failures must be positive".into());
        }
        if self.reward_window == 0 {
            return Err("training.reward_window must be positive".into());
        }
        if self.parallel_envs == 0 || self.rollout_steps % self.parallel_envs != 0 {
            return Err("training.parallel_envs must be positive and divide rollout_steps".into());
        }
        if !(self.rule_weight.is_finite() && self.progression_weight.is_finite()) {
            return Err("training reward weights must be finite".into());
        }
        Ok(())
    }
}

/// Inputs of one training phase.
#[derive(Clone, Copy)]
pub struct TrainSetup<'a> {
    pub scenarios: &'a [Scenario],
    pub env: &'a EnvironmentParams,
    pub planner: &'a PlannerParams,
    pub rules: &'a RuleParams,
    pub model: &'a ModelParams,
    pub learning: &'a LearningParams,
    pub training: &'a TrainingParams,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub critic: Critic,
    pub metrics: Vec<RoundMetrics>,
    /// Indices of scenarios dropped after repeated planner failures.
    pub skipped: Vec<usize>,
    pub episodes: usize,
    /// Steps whose rule reward was replaced by 0 for lack of history.
    pub invalid_rule_steps: usize,
    /// One line per notable event (skips, failed starts).
    pub log: Vec<String>,
}

struct Active {
    scenario: usize,
    id: usize,
    episode: Episode,
    /// Index into the slot's transitions of the episode's latest step this round.
    last: Option<usize>,
}

/// One of the parallel environments.
struct Slot {
    index: usize,
    rng: ChaCha8Rng,
    active: Option<Active>,
    started: usize,
}

/// What one slot produced during a round.
#[derive(Default)]
struct Collected {
    transitions: Vec<Transition>,
    completed: Vec<Vec<f64>>,
    /// `(scenario, failed)` for every finished or aborted episode, in order.
    outcomes: Vec<(usize, bool)>,
    log: Vec<String>,
    invalid_rule_steps: usize,
}

struct Shared<'s, 'a> {
    setup: &'s TrainSetup<'a>,
    roads: &'s [Road],
    critic: &'s Critic,
    failures: &'s [usize],
    skipped: &'s [usize],
    slots: usize,
    round: usize,
}

impl Shared<'_, '_> {
    fn ctx(&self, i: usize) -> EnvContext<'_> {
        let t = self.setup.training;
        EnvContext {
            scenario: &self.setup.scenarios[i],
            road: &self.roads[i],
            env: self.setup.env,
            planner: self.setup.planner,
            rules: self.setup.rules,
            phase: t.phase,
            rule_weight: t.rule_weight,
            progression_weight: t.progression_weight,
        }
    }
}

/// Runs `steps` simulation steps in one slot with the frozen critic.
fn collect(slot: &mut Slot, steps: usize, sh: &Shared<'_, '_>) -> Result<Collected, TrainError> {
    use rand::Rng;

    let max_failures = sh.setup.training.max_planner_failures;
    let mut failures = sh.failures.to_vec();
    let mut out = Collected::default();
    let tag = |sc: usize, id: Option<usize>| match id {
        Some(id) => format!("round {} env {} scenario {sc} episode {id}", sh.round, slot.index),
        None => format!("round {} env {} scenario {sc}", sh.round, slot.index),
    };
    if let Some(a) = slot.active.as_mut() {
        a.last = None;
    }
    while out.transitions.len() < steps {
        let Some(a) = slot.active.as_mut() else {
            // Skips decided earlier in this round by this slot apply at once.
            let open: Vec<usize> = (0..sh.setup.scenarios.len())
                .filter(|i| !sh.skipped.contains(i) && failures[*i] < max_failures)
                .collect();
            if open.is_empty() {
                return Err(TrainError::AllScenariosSkipped);
            }
            let sc = open[slot.rng.random_range(0..open.len())];
            match Episode::reset(&sh.ctx(sc), &mut slot.rng) {
                Ok(episode) => {
                    let id = slot.started * sh.slots + slot.index;
                    slot.started += 1;
                    slot.active = Some(Active { scenario: sc, id, episode, last: None });
                }
                Err(TrainError::Start(msg)) => {
                    out.log.push(format!("{}: {msg}", tag(sc, None)));
                    failures[sc] += 1;
                    out.outcomes.push((sc, true));
                }
                Err(e) => return Err(e),
            }
            continue;
        };
        let ctx = sh.ctx(a.scenario);
        let graph = sh.critic.graph_of(&a.episode.view(&ctx))?;
        let value = sh.critic.net.value(&graph)?;
        match a.episode.step(&ctx, Some(sh.critic))? {
            StepResult::PlannerFailed(e) => {
                out.log.push(format!("{}: {e}", tag(a.scenario, Some(a.id))));
                if let Some(i) = a.last {
                    out.transitions[i].done = true;
                }
                if !a.episode.rewards.is_empty() {
                    out.completed.push(std::mem::take(&mut a.episode.rewards));
                }
                failures[a.scenario] += 1;
                out.outcomes.push((a.scenario, true));
                slot.active = None;
            }
            StepResult::Moved { reward, termination } => {
                out.invalid_rule_steps += usize::from(reward.rule_invalid);
                let mut tr = Transition {
                    graph,
                    reward,
                    done: termination.is_some_and(Termination::is_terminal),
                    bootstrap: None,
                    episode: a.id,
                    value,
                };
                if termination == Some(Termination::ScenarioEnd) {
                    tr.bootstrap = Some(sh.critic.state_value(&a.episode.view(&ctx))?);
                }
                out.transitions.push(tr);
                a.last = Some(out.transitions.len() - 1);
                if termination.is_some() {
                    failures[a.scenario] = 0;
                    out.completed.push(std::mem::take(&mut a.episode.rewards));
                    out.outcomes.push((a.scenario, false));
                    slot.active = None;
                }
            }
        }
    }
    // The segment still running is cut by the round boundary.
    if let Some(a) = &slot.active {
        if let Some(i) = a.last {
            let ctx = sh.ctx(a.scenario);
            out.transitions[i].bootstrap = Some(sh.critic.state_value(&a.episode.view(&ctx))?);
        }
    }
    Ok(out)
}

/// Runs one phase; `on_round` sees the metrics and critic after every update.
///
/// Every round, each of the `parallel_envs` environments contributes
/// `rollout_steps / parallel_envs` consecutive transitions to the buffer, in
/// environment order. Environments own their random streams, so the result
/// does not depend on whether they run concurrently.
pub fn train_phase<F>(setup: &TrainSetup<'_>, mut on_round: F) -> Result<TrainOutcome, TrainError>
where
    F: FnMut(&RoundMetrics, &Critic) -> Result<(), TrainError>,
{
    if setup.scenarios.is_empty() {
        return Err(TrainError::NoScenarios);
    }
    let training = setup.training;
    training.validate().map_err(TrainError::Invalid)?;
    let roads: Vec<Road> = setup.scenarios.iter().map(Scenario::road).collect::<Result<_, _>>()?;
    let mut critic = Critic::new(setup.model, setup.seed);
    let mut opt = Adam::new(critic.net.num_params());
    let episode_seed = seed::derive(setup.seed, seed::tags::EPISODES);
    let mut shuffle_rng = seed::derived_rng(setup.seed, seed::tags::SHUFFLE);
    let mut slots: Vec<Slot> = (0..training.parallel_envs)
        .map(|index| Slot { index, rng: seed::derived_rng(episode_seed, &format!("env{index}")), active: None, started: 0 })
        .collect();
    let per_slot = training.rollout_steps / training.parallel_envs;

    let mut failures = vec![0usize; setup.scenarios.len()];
    let mut skipped: Vec<usize> = Vec::new();
    let mut log = Vec::new();
    let mut metrics = Vec::new();
    let mut invalid_rule_steps = 0usize;
    let mut recent: VecDeque<Vec<f64>> = VecDeque::new();

    for round in 0..training.rounds() {
        let shared = Shared {
            setup,
            roads: &roads,
            critic: &critic,
            failures: &failures,
            skipped: &skipped,
            slots: slots.len(),
            round,
        };
        let parts: Vec<Collected> = slots
            .par_iter_mut()
            .map(|slot| collect(slot, per_slot, &shared))
            .collect::<Result<_, _>>()?;

        let mut buffer = RolloutBuffer::new(training.rollout_steps, round);
        for part in parts {
            buffer.transitions.extend(part.transitions);
            for ep in part.completed {
                if recent.len() == training.reward_window {
                    recent.pop_front();
                }
                recent.push_back(ep);
            }
            log.extend(part.log);
            invalid_rule_steps += part.invalid_rule_steps;
            for (sc, failed) in part.outcomes {
                if !failed {
                    failures[sc] = 0;
                    continue;
                }
                failures[sc] += 1;
                if failures[sc] >= training.max_planner_failures && !skipped.contains(&sc) {
                    skipped.push(sc);
                    log.push(format!("round {round}: scenario {sc} skipped after {} consecutive failures", failures[sc]));
                }
            }
        }

        let targets = buffer.returns(setup.learning.gamma);
        let predictions: Vec<f64> = buffer.transitions.iter().map(|t| t.value).collect();
        let ev = explained_variance(&targets, &predictions);
        let graphs: Vec<_> = buffer.transitions.iter().map(|t| &t.graph).collect();
        let losses = update_critic(&mut critic, &mut opt, &graphs, &targets, setup.learning, &mut shuffle_rng)?;
        let row = RoundMetrics {
            update_round: round,
            explained_variance: ev,
            episode_reward_mean: episode_reward_mean(recent.make_contiguous()),
            mean_loss: losses.iter().sum::<f64>() / losses.len() as f64,
        };
        on_round(&row, &critic)?;
        metrics.push(row);
    }
    let episodes = slots.iter().map(|s| s.started).sum();
    Ok(TrainOutcome { critic, metrics, skipped, episodes, invalid_rule_steps, log })
}
