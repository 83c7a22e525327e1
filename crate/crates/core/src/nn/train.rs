//! Mini-batch gradient training over a [`Network`].

use super::network::{LossScratch, Network};
use super::{LossSpec, NnResult};
use crate::nn::dropout_mask;
use crate::optim::{clip_gradient, Optimizer, Rule};
use crate::rng::Rng;
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rayon::prelude::*;

#[derive(Debug, Clone)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch: usize,
    pub rule: Rule,
    pub loss: LossSpec,
    /// Gradient-norm cap applied to the batch-mean gradient.
    pub clip: Option<f64>,
    /// Evaluate batch items on the rayon pool. Determinism is unaffected:
    /// items are reduced in index order.
    pub parallel: bool,
}

impl FitConfig {
    pub fn new(epochs: usize, batch: usize, rule: Rule, loss: LossSpec) -> Self {
        FitConfig {
            epochs,
            batch,
            rule,
            loss,
            clip: None,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FitLog {
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
}

/// Trains `net` in place on rows of `features` against rows of `targets`.
///
/// Batch items are differentiated independently (per-item tapes) and their
/// gradients averaged, so the update equals full mini-batch backpropagation.
pub fn fit(
    net: &mut Network,
    features: &Tensor,
    targets: &Tensor,
    cfg: &FitConfig,
    rng: &mut Rng,
) -> NnResult<FitLog> {
    assert_eq!(features.shape().len(), 2, "features must be [n × d]");
    assert_eq!(targets.shape().len(), 2, "targets must be [n × t]");
    let n = features.shape()[0];
    assert_eq!(targets.shape()[0], n, "row counts");

    let tape = net.loss_tape(&cfg.loss)?;
    let mut params = net.params();
    let mut opt = Optimizer::new(cfg.rule, params.len());
    let mask_len = tape.mask_len();
    let dropout_rates: Vec<f64> = net
        .layers()
        .iter()
        .filter_map(|l| match l {
            super::Layer::Dropout { rate } => Some(*rate),
            _ => None,
        })
        .collect();
    let mut log = FitLog::default();

    let mut order: Vec<usize> = (0..n).collect();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch) {
            // dropout masks are drawn sequentially so the parallel pass
            // cannot perturb the RNG stream
            let masks: Vec<Vec<f64>> = chunk
                .iter()
                .map(|_| -> NnResult<Vec<f64>> {
                    if mask_len == 0 {
                        return Ok(Vec::new());
                    }
                    let mut flat = Vec::with_capacity(mask_len);
                    for (&sz, &rate) in tape.mask_sizes().iter().zip(&dropout_rates) {
                        flat.extend(dropout_mask([sz], rate, rng)?.into_data());
                    }
                    Ok(flat)
                })
                .collect::<NnResult<_>>()?;

            let eval_one = |(&i, mask): (&usize, &Vec<f64>)| {
                let mut ws = LossScratch::default();
                let mut grad = vec![0.0; params.len()];
                let value = tape
                    .grad_into(&params, features.row(i), targets.row(i), mask, &mut ws, &mut grad)
                    .expect("training inputs are domain-safe");
                (value, grad)
            };

            let results: Vec<(f64, Vec<f64>)> = if cfg.parallel {
                chunk.par_iter().zip(masks.par_iter()).map(eval_one).collect()
            } else {
                chunk.iter().zip(masks.iter()).map(eval_one).collect()
            };

            let scale = 1.0 / chunk.len() as f64;
            let mut grad = vec![0.0; params.len()];
            let mut batch_loss = 0.0;
            for (value, g) in &results {
                batch_loss += value * scale;
                for (acc, gi) in grad.iter_mut().zip(g) {
                    *acc += gi * scale;
                }
            }
            if let Some(threshold) = cfg.clip {
                grad = clip_gradient(&grad, threshold);
            }
            opt.step(&mut params, &grad)?;
            epoch_loss += batch_loss * chunk.len() as f64;
        }
        log.epoch_loss.push(epoch_loss / n as f64);
    }
    net.set_params(&params);
    Ok(log)
}
