//! Traffic rules as quantitative STL formulas over scenario predicates.

mod predicates;
mod rulebook;
pub mod stl;

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use predicates::{EgoTrack, Predicate, World, ABSENT, EMPTY_QUANTIFIER};
pub use rulebook::{rulebook_evaluate, RuleBook, RuleBookReport, Verdict};
pub use stl::{robustness, Atom, Formula, Signals, Term, TraceTable};

use crate::scenario::VehicleId;

#[derive(Debug, Error)]
pub enum RuleError {
    #[error("unknown predicate `{0}`")]
    UnknownPredicate(String),
    #[error("predicate `{name}` expects {expected} arguments")]
    Arity { name: String, expected: usize },
    #[error("no signal recorded for `{0}`")]
    MissingSignal(String),
    #[error("insufficient history at step {step}")]
    InvalidTimestep { step: usize },
    #[error("step {step} outside a trace of {len} samples")]
    OutOfRange { step: usize, len: usize },
    #[error("unbound quantified vehicle in `{0}`")]
    Unbound(String),
    #[error("ego track is empty")]
    EmptyEgoTrack,
    #[error("scenario: {0}")]
    Scenario(#[from] crate::scenario::ScenarioError),
    #[error("cannot write trace: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SafeDistanceParams {
    /// Reaction time, seconds.
    pub delta: f64,
    /// Maximum braking deceleration, negative, m/s^2.
    pub a_min: f64,
}

impl Default for SafeDistanceParams {
    fn default() -> Self {
        Self { delta: 0.3, a_min: -10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CutInParams {
    /// Recovery window after a cut-in, seconds.
    pub t_c: f64,
}

impl Default for CutInParams {
    fn default() -> Self {
        Self { t_c: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CongestionParams {
    pub min_vehicles: usize,
    /// Largest bumper-to-bumper gap inside a cluster, metres.
    pub max_gap: f64,
    pub congestion_speed: f64,
    pub slow_speed: f64,
    pub queue_speed: f64,
}

impl Default for CongestionParams {
    fn default() -> Self {
        Self { min_vehicles: 3, max_gap: 20.0, congestion_speed: 2.78, slow_speed: 8.33, queue_speed: 11.11 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleParams {
    pub safe_distance: SafeDistanceParams,
    pub cutin: CutInParams,
    pub congestion: CongestionParams,
    /// Distance before a no-overtaking sign at which it is perceived, metres.
    pub sign_detection_range: f64,
    /// Symmetric clip applied before robustness enters rewards and costs.
    pub robustness_clip: f64,
}

impl Default for RuleParams {
    fn default() -> Self {
        Self {
            safe_distance: SafeDistanceParams::default(),
            cutin: CutInParams::default(),
            congestion: CongestionParams::default(),
            sign_detection_range: 50.0,
            robustness_clip: 10.0,
        }
    }
}

impl RuleParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.safe_distance.delta >= 0.0) {
            return Err("rules.safe_distance.delta must be >= 0".into());
        }
        if !(self.safe_distance.a_min < 0.0) {
            return Err("rules.safe_distance.a_min must be negative".into());
        }
        if !(self.cutin.t_c >= 0.0) {
            return Err("rules.cutin.t_c must be >= 0".into());
        }
        let c = &self.congestion;
        if c.min_vehicles < 2 || !(c.max_gap > 0.0) {
            return Err("rules.congestion needs min_vehicles >= 2 and max_gap > 0".into());
        }
        if !(c.congestion_speed > 0.0 && c.slow_speed > 0.0 && c.queue_speed > 0.0) {
            return Err("rules.congestion speeds must be positive".into());
        }
        if !(self.sign_detection_range >= 0.0) || !(self.robustness_clip > 0.0) {
            return Err("rules.sign_detection_range must be >= 0 and robustness_clip > 0".into());
        }
        Ok(())
    }

    pub fn clip(&self, rho: f64) -> f64 {
        rho.clamp(-self.robustness_clip, self.robustness_clip)
    }
}

/// The three formalised rules, listed in priority order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleId {
    /// Safe distance to the preceding vehicle.
    G1,
    /// Keep right inside a no-overtaking zone.
    I6,
    /// No overtaking on the right.
    I2,
}

impl RuleId {
    pub const ALL: [RuleId; 3] = [RuleId::G1, RuleId::I6, RuleId::I2];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::G1 => "R_G1",
            RuleId::I6 => "R_I6",
            RuleId::I2 => "R_I2",
        }
    }

    pub fn parse(text: &str) -> Option<Self> {
        match text.trim().to_ascii_uppercase().trim_start_matches("R_") {
            "G1" => Some(RuleId::G1),
            "I6" => Some(RuleId::I6),
            "I2" => Some(RuleId::I2),
            _ => None,
        }
    }

    /// Whether the body is quantified over other vehicles.
    pub fn quantified(self) -> bool {
        !matches!(self, RuleId::I6)
    }

    /// Rule body without the outer globally; quantified rules use [`Term::Var`].
    pub fn body(self, params: &RuleParams) -> Formula {
        use Term::{Ego, Var};
        match self {
            RuleId::G1 => {
                let cut_in = || Formula::atom("cut_in", &[Var, Ego]);
                let recent_cut_in = Formula::once(
                    0.0,
                    params.cutin.t_c,
                    Formula::and(vec![cut_in(), Formula::previous(Formula::not(cut_in()))]),
                );
                Formula::implies(
                    Formula::and(vec![
                        Formula::atom("in_same_lane", &[Ego, Var]),
                        Formula::atom("in_front_of", &[Ego, Var]),
                        Formula::not(recent_cut_in),
                    ]),
                    Formula::atom("keeps_safe_distance_prec", &[Ego, Var]),
                )
            }
            RuleId::I2 => Formula::implies(
                Formula::and(vec![
                    Formula::atom("left_of", &[Var, Ego]),
                    Formula::atom("drives_faster", &[Ego, Var]),
                ]),
                Formula::or(vec![
                    Formula::atom("in_congestion", &[Var]),
                    Formula::atom("in_slow_moving_traffic", &[Var]),
                    Formula::atom("in_queue_of_vehicles", &[Var]),
                ]),
            ),
            RuleId::I6 => Formula::implies(
                Formula::atom("no_overtaking_sign", &[Ego]),
                Formula::atom("in_rightmost_lane", &[Ego]),
            ),
        }
    }

    /// Full rule `G(body)`.
    pub fn formula(self, params: &RuleParams) -> Formula {
        Formula::globally(self.body(params))
    }
}

impl Serialize for RuleId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for RuleId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        RuleId::parse(&text).ok_or_else(|| serde::de::Error::custom(format!("unknown rule `{text}`")))
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Instantaneous robustness of the rule body at scenario step `step`.
///
/// Quantified rules take the minimum over every other vehicle present on
/// the ego carriageway; with none present the result is [`EMPTY_QUANTIFIER`].
pub fn rule_robustness(rule: RuleId, world: &World<'_>, step: usize) -> Result<f64, RuleError> {
    let local = world.local_step(step)?;
    let body = rule.body(world.params);
    if !rule.quantified() {
        return robustness(&body, &world.bind(None), local);
    }
    let mut acc = EMPTY_QUANTIFIER;
    for id in world.others_at(step) {
        acc = acc.min(robustness(&body, &world.bind(Some(id)), local)?);
    }
    Ok(acc)
}

/// Running infimum of the body over the ego track from `step` onwards.
pub fn rule_robustness_globally(rule: RuleId, world: &World<'_>, step: usize) -> Result<f64, RuleError> {
    let mut acc = f64::INFINITY;
    for s in step..world.ego.end_step() {
        acc = acc.min(rule_robustness(rule, world, s)?);
    }
    Ok(acc)
}

/// Per-step body robustness of one rule; `None` marks steps with insufficient history.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleSeries {
    pub rule: RuleId,
    pub start_step: usize,
    pub values: Vec<Option<f64>>,
}

impl RuleSeries {
    pub fn compute(rule: RuleId, world: &World<'_>) -> Result<Self, RuleError> {
        let start = world.ego.start_step;
        let mut values = Vec::with_capacity(world.ego.states.len());
        for step in start..world.ego.end_step() {
            match rule_robustness(rule, world, step) {
                Ok(v) => values.push(Some(v)),
                Err(RuleError::InvalidTimestep { .. }) => values.push(None),
                Err(e) => return Err(e),
            }
        }
        Ok(Self { rule, start_step: start, values })
    }

    pub fn min(&self) -> Option<f64> {
        self.values.iter().flatten().copied().reduce(f64::min)
    }

    pub fn violations(&self) -> usize {
        self.values.iter().flatten().filter(|v| **v <= 0.0).count()
    }
}

/// Robustness series of several rules on one time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessTrace {
    pub timestep: f64,
    pub series: Vec<RuleSeries>,
}

impl RobustnessTrace {
    /// Writes `t,rule,value` rows; invalid steps are written with an empty value.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), RuleError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "rule", "value"]).map_err(csv_io)?;
        for series in &self.series {
            for (i, v) in series.values.iter().enumerate() {
                let t = (series.start_step + i) as f64 * self.timestep;
                let value = v.map(|x| x.to_string()).unwrap_or_default();
                w.write_record([format!("{t:.3}"), series.rule.to_string(), value]).map_err(csv_io)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> RuleError {
    RuleError::Io(std::io::Error::other(e.to_string()))
}

/// Vehicle id carried by a term once the quantified variable is bound.
pub(crate) fn resolve(term: Term, binding: Option<VehicleId>) -> Option<VehicleId> {
    match term {
        Term::Ego => Some(VehicleId::EGO),
        Term::Var => binding,
        Term::Vehicle(id) => Some(id),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_ids_parse() {
        assert_eq!(RuleId::parse("R_G1"), Some(RuleId::G1));
        assert_eq!(RuleId::parse("i6"), Some(RuleId::I6));
        assert_eq!(RuleId::parse("x"), None);
    }

    #[test]
    fn g1_uses_cut_in_window() {
        let p = RuleParams::default();
        let f = RuleId::G1.body(&p);
        let names: Vec<_> = f.atoms().iter().map(|a| a.name.clone()).collect();
        assert!(names.contains(&"cut_in".to_string()));
        assert!(matches!(RuleId::G1.formula(&p), Formula::Globally(_)));
    }

    #[test]
    fn default_params_valid() {
        assert!(RuleParams::default().validate().is_ok());
        let bad = RuleParams { safe_distance: SafeDistanceParams { delta: 0.3, a_min: 1.0 }, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
