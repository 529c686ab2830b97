use crate::critic::TrafficGraph;

use super::reward::RewardParts;

/// One simulation step as seen by the critic.
#[derive(Debug, Clone)]
pub struct Transition {
    /// Graph of the state the step started from.
    pub graph: TrafficGraph,
    pub reward: RewardParts,
    /// The episode terminated after this step; the return bootstraps with 0.
    pub done: bool,
    /// Value of the following state when the segment was cut short
    /// (buffer full or scenario end).
    pub bootstrap: Option<f64>,
    pub episode: usize,
    /// Critic value of `graph` under the rollout snapshot.
    pub value: f64,
}

/// Transitions collected under one critic snapshot.
#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    pub capacity: usize,
    /// Index of the update round whose parameters produced every transition.
    pub snapshot_round: usize,
}

impl RolloutBuffer {
    pub fn new(capacity: usize, snapshot_round: usize) -> Self {
        Self { transitions: Vec::with_capacity(capacity), capacity, snapshot_round }
    }

    pub fn is_full(&self) -> bool {
        self.transitions.len() >= self.capacity
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.transitions.iter().map(|t| t.reward.total()).collect()
    }

    pub fn dones(&self) -> Vec<bool> {
        self.transitions.iter().map(|t| t.done).collect()
    }

    pub fn bootstraps(&self) -> Vec<Option<f64>> {
        self.transitions.iter().map(|t| t.bootstrap).collect()
    }

    /// Discounted return-to-go of every transition.
    pub fn returns(&self, gamma: f64) -> Vec<f64> {
        compute_returns(&self.rewards(), &self.dones(), &self.bootstraps(), gamma)
    }
}

/// Backward recursion `G_t = r_t + γ·next`, where `next` is 0 after a done
/// step, the bootstrap value after a cut segment, and `G_{t+1}` otherwise.
/// A trailing transition with neither flag bootstraps with 0.
pub fn compute_returns(rewards: &[f64], dones: &[bool], bootstrap: &[Option<f64>], gamma: f64) -> Vec<f64> {
    assert!(rewards.len() == dones.len() && rewards.len() == bootstrap.len(), "buffer columns differ in length");
    let mut out = vec![0.0; rewards.len()];
    let mut next = 0.0;
    for i in (0..rewards.len()).rev() {
        let tail = if dones[i] { 0.0 } else { bootstrap[i].unwrap_or(next) };
        next = rewards[i] + gamma * tail;
        out[i] = next;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometric_sum() {
        let g = compute_returns(&[1.0, 1.0, 1.0], &[false, false, true], &[None, None, None], 0.99);
        let want = [2.9701, 1.99, 1.0];
        for (a, b) in g.iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn truncation_bootstraps() {
        let g = compute_returns(&[0.5, 2.0], &[false, false], &[None, Some(7.0)], 0.99);
        assert!((g[1] - (2.0 + 0.99 * 7.0)).abs() < 1e-12);
        // A done flag cuts the recursion between episodes.
        let g = compute_returns(&[1.0, 5.0], &[true, true], &[None, None], 0.5);
        assert_eq!(g, vec![1.0, 5.0]);
    }
}
