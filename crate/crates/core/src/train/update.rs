use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use super::{LearningParams, TrainError};
use crate::critic::{Adam, Critic, TrafficGraph};

/// Minibatch regression of `V(graph)` onto `targets`, shuffled per epoch.
///
/// The loss is the mean squared error in units of the critic's return scale.
/// Per-sample gradients are computed in parallel and summed in sample order,
/// so the result does not depend on the thread count. Returns the mean loss
/// of every epoch.
pub fn update_critic<R: Rng>(
    critic: &mut Critic,
    opt: &mut Adam,
    graphs: &[&TrafficGraph],
    targets: &[f64],
    learning: &LearningParams,
    rng: &mut R,
) -> Result<Vec<f64>, TrainError> {
    assert_eq!(graphs.len(), targets.len(), "graphs and targets differ in length");
    let scale = critic.net.return_scale;
    let adam = learning.adam();
    let mut epoch_losses = Vec::with_capacity(learning.epochs);
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    for _ in 0..learning.epochs {
        order.shuffle(rng);
        let mut losses = Vec::new();
        for batch in order.chunks(learning.batch_size.max(1)) {
            let net = &critic.net;
            let b = batch.len() as f64;
            let per_sample: Vec<(f64, Vec<f64>)> = batch
                .par_iter()
                .map(|&i| {
                    let cache = net.forward(graphs[i])?;
                    let resid = cache.output - targets[i] / scale;
                    Ok((resid * resid, net.backward(graphs[i], &cache, 2.0 * resid / b)))
                })
                .collect::<Result<_, crate::critic::CriticError>>()?;
            let mut grad = vec![0.0; net.num_params()];
            let mut loss = 0.0;
            for (l, g) in &per_sample {
                loss += l / b;
                for (acc, v) in grad.iter_mut().zip(g) {
                    *acc += v;
                }
            }
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss(loss));
            }
            opt.step(&mut critic.net.params, &grad, &adam)?;
            losses.push(loss);
        }
        epoch_losses.push(losses.iter().sum::<f64>() / losses.len().max(1) as f64);
    }
    Ok(epoch_losses)
}
