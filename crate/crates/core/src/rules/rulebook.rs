use std::cmp::Ordering;

use super::{RobustnessTrace, RuleError, RuleId, RuleParams, RuleSeries, World};

/// The prioritised rule book `R_G1 > R_I6 > R_I2`.
#[derive(Debug, Clone, PartialEq)]
pub struct RuleBook {
    /// Highest priority first.
    pub rules: [RuleId; 3],
}

impl Default for RuleBook {
    fn default() -> Self {
        Self { rules: [RuleId::G1, RuleId::I6, RuleId::I2] }
    }
}

/// Ranking key of one trajectory under the rule book.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    /// Compliance of each rule in priority order (minimum robustness > 0).
    pub compliant: [bool; 3],
    /// Sum over rules and valid steps of clipped robustness.
    pub score: f64,
}

impl Verdict {
    /// `Greater` means `self` ranks strictly better than `other`.
    pub fn compare(&self, other: &Verdict) -> Ordering {
        self.compliant.cmp(&other.compliant).then(self.score.total_cmp(&other.score))
    }
}

impl RuleBook {
    pub fn priority(&self, rule: RuleId) -> usize {
        self.rules.iter().position(|r| *r == rule).expect("rule book holds every rule")
    }

    /// Builds a verdict from per-rule minimum robustness and the clipped sum.
    pub fn verdict(&self, minima: &[(RuleId, Option<f64>)], score: f64) -> Verdict {
        let mut compliant = [true; 3];
        for &(rule, min) in minima {
            compliant[self.priority(rule)] = min.map_or(true, |m| m > 0.0);
        }
        Verdict { compliant, score }
    }

    /// Indices of `verdicts` from best to worst; equal verdicts keep input order.
    pub fn rank(&self, verdicts: &[Verdict]) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..verdicts.len()).collect();
        idx.sort_by(|&a, &b| verdicts[b].compare(&verdicts[a]));
        idx
    }

    /// Index of the best verdict, first on ties.
    pub fn best(&self, verdicts: &[Verdict]) -> Option<usize> {
        self.rank(verdicts).first().copied()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RuleBookReport {
    pub trace: RobustnessTrace,
    pub verdict: Verdict,
}

impl RuleBookReport {
    pub fn series(&self, rule: RuleId) -> &RuleSeries {
        self.trace.series.iter().find(|s| s.rule == rule).expect("every rule evaluated")
    }
}

/// Evaluates all three rules over the full ego track.
pub fn rulebook_evaluate(world: &World<'_>) -> Result<RuleBookReport, RuleError> {
    let book = RuleBook::default();
    let params: &RuleParams = world.params;
    let mut series = Vec::with_capacity(3);
    let mut minima = Vec::with_capacity(3);
    let mut score = 0.0;
    for rule in book.rules {
        let s = RuleSeries::compute(rule, world)?;
        score += s.values.iter().flatten().map(|v| params.clip(*v)).sum::<f64>();
        minima.push((rule, s.min()));
        series.push(s);
    }
    let verdict = book.verdict(&minima, score);
    Ok(RuleBookReport { trace: RobustnessTrace { timestep: world.scenario.timestep, series }, verdict })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(g1: bool, i6: bool, i2: bool, score: f64) -> Verdict {
        Verdict { compliant: [g1, i6, i2], score }
    }

    #[test]
    fn lower_priority_violation_preferred() {
        let book = RuleBook::default();
        let only_i2 = v(true, true, false, -50.0);
        let only_g1 = v(false, true, true, 50.0);
        assert_eq!(book.best(&[only_g1, only_i2]), Some(1));
    }

    #[test]
    fn tie_broken_by_score() {
        let book = RuleBook::default();
        assert_eq!(book.rank(&[v(true, true, true, 1.0), v(true, true, true, 2.0)]), vec![1, 0]);
    }

    #[test]
    fn compliant_dominates() {
        let book = RuleBook::default();
        assert_eq!(book.best(&[v(false, false, false, 99.0), v(true, true, true, 0.0)]), Some(1));
    }
}
