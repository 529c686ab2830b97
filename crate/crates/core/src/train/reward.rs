//! Per-step reward terms.

use crate::rules::{rule_robustness, RuleError, RuleId, World};

/// Reward components of one step, unweighted, with the weights applied.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardParts {
    /// Clipped body robustness of the phase rule; 0 on an invalid step.
    pub rule: f64,
    /// Bracketed progression term before weighting.
    pub progression: f64,
    pub rule_weight: f64,
    pub progression_weight: f64,
    /// The rule could not be evaluated (insufficient history).
    pub rule_invalid: bool,
}

impl RewardParts {
    pub fn total(&self) -> f64 {
        self.rule_weight * self.rule + self.progression_weight * self.progression
    }
}

/// Clipped robustness of `phase` at `step`, or `None` while the rule lacks history.
pub fn reward_rule(phase: RuleId, world: &World<'_>, step: usize) -> Result<Option<f64>, RuleError> {
    match rule_robustness(phase, world, step) {
        Ok(rho) => Ok(Some(world.params.clip(rho))),
        Err(RuleError::InvalidTimestep { .. }) => Ok(None),
        Err(e) => Err(e),
    }
}

/// `w·max(s1 − s0, 0)/(v_ref·dt) + (1 − w)·s1/L` with `w = 1 − s1/L`.
///
/// Arc lengths are measured from the episode start and clamped to `[0, L]`.
pub fn reward_progression(s0: f64, s1: f64, route_length: f64, v_ref: f64, dt: f64) -> f64 {
    if !(route_length > 0.0) {
        return 0.0;
    }
    let s0 = s0.clamp(0.0, route_length);
    let s1 = s1.clamp(0.0, route_length);
    let frac = s1 / route_length;
    let w = 1.0 - frac;
    w * (s1 - s0).max(0.0) / (v_ref * dt) + (1.0 - w) * frac
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn progression_examples() {
        assert_eq!(reward_progression(250.0, 250.0, 500.0, 15.0, 0.1), 0.25);
        assert_eq!(reward_progression(0.0, 0.0, 500.0, 15.0, 0.1), 0.0);
        // Backward motion: the rate term is clamped, the arclength term stays.
        assert_eq!(reward_progression(260.0, 250.0, 500.0, 15.0, 0.1), 0.25);
    }
}
