use std::io::Write;

use super::TrainError;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

/// `1 − Var(G − V)/Var(G)`; `None` with fewer than two samples or constant targets.
pub fn explained_variance(targets: &[f64], predictions: &[f64]) -> Option<f64> {
    assert_eq!(targets.len(), predictions.len(), "targets and predictions differ in length");
    if targets.len() < 2 {
        return None;
    }
    let var = variance(targets);
    if !(var > 0.0) {
        return None;
    }
    let resid: Vec<f64> = targets.iter().zip(predictions).map(|(g, v)| g - v).collect();
    Some(1.0 - variance(&resid) / var)
}

/// Mean over episodes of the summed per-step rewards; `None` without episodes.
pub fn episode_reward_mean(episodes: &[Vec<f64>]) -> Option<f64> {
    if episodes.is_empty() {
        return None;
    }
    Some(episodes.iter().map(|e| e.iter().sum::<f64>()).sum::<f64>() / episodes.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub update_round: usize,
    pub explained_variance: Option<f64>,
    pub episode_reward_mean: Option<f64>,
    pub mean_loss: f64,
}

pub const METRICS_HEADER: [&str; 4] = ["update_round", "explained_variance", "episode_reward_mean", "mean_loss"];

/// One row per round; undefined values are left empty.
pub fn write_metrics_csv<W: Write>(rows: &[RoundMetrics], out: W) -> Result<(), TrainError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| TrainError::Csv(e.to_string());
    w.write_record(METRICS_HEADER).map_err(err)?;
    for r in rows {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        w.write_record([
            r.update_round.to_string(),
            opt(r.explained_variance),
            opt(r.episode_reward_mean),
            r.mean_loss.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| TrainError::Csv(e.to_string()))?;
    Ok(())
}
