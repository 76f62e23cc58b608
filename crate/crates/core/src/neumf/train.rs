//! Mini-batch training with sampled negatives and the Adam optimizer.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{NeuralModel, PairInput};
use crate::domain::ObservedInteractionMatrix;
use crate::error::{Error, Result};
use crate::features::FeatureSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub negatives_per_positive: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Share of the fused readout taken from the pretrained GMF side.
    pub pretrain_alpha: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 73,
            learning_rate: 1e-3,
            batch_size: 128,
            negatives_per_positive: 4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            pretrain_alpha: 0.5,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning_rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.epsilon <= 0.0 {
            return Err(Error::invalid("Adam parameters out of range"));
        }
        if !(0.0..=1.0).contains(&self.pretrain_alpha) {
            return Err(Error::invalid("pretrain_alpha must lie in [0, 1]"));
        }
        Ok(())
    }
}

pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new<M: NeuralModel>(model: &M, cfg: &TrainConfig) -> Self {
        let shapes: Vec<usize> = model.tensors().iter().map(|t| t.data.len()).collect();
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.epsilon,
            t: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn step<M: NeuralModel>(&mut self, model: &mut M, grad: &M) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        let grads = grad.tensors();
        for (i, params) in model.tensors_mut().into_iter().enumerate() {
            let g = grads[i].data;
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..params.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                params[j] -= self.lr * (m[j] / c1) / ((v[j] / c2).sqrt() + self.eps);
            }
        }
    }
}

/// One epoch of labelled pairs: every observed cell plus sampled unobserved cells.
pub fn sample_epoch(
    observed: &ObservedInteractionMatrix,
    negatives_per_positive: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize, f64)> {
    let m = observed.n_posts();
    let mut out = Vec::new();
    for u in 0..observed.n_users() {
        let row = observed.row(u);
        let pos = row.iter().filter(|b| **b).count();
        if pos == 0 {
            continue;
        }
        let has_free = pos < m;
        for (p, _) in row.iter().enumerate().filter(|(_, b)| **b) {
            out.push((u, p, 1.0));
            if !has_free {
                continue;
            }
            for _ in 0..negatives_per_positive {
                let n = loop {
                    let c = rng.random_range(0..m);
                    if !row[c] {
                        break c;
                    }
                };
                out.push((u, n, 0.0));
            }
        }
    }
    out.shuffle(rng);
    out
}

/// Trains in place and returns the epoch-mean loss for each epoch.
pub fn train<M: NeuralModel>(
    model: &mut M,
    features: &FeatureSet,
    observed: &ObservedInteractionMatrix,
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    train_with(model, features, observed, cfg, |_, _| {})
}

/// [`train`] with a callback invoked after each epoch with `(epoch, mean loss)`.
pub fn train_with<M, F>(
    model: &mut M,
    features: &FeatureSet,
    observed: &ObservedInteractionMatrix,
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<Vec<f64>>
where
    M: NeuralModel,
    F: FnMut(usize, f64),
{
    cfg.validate()?;
    if observed.count() == 0 {
        return Err(Error::Empty("observed interactions"));
    }
    if observed.n_users() != features.n_users() || observed.n_posts() != features.n_posts() {
        return Err(Error::shape("observed matrix and features disagree on size"));
    }
    if features.width() != model.input_dim() {
        return Err(Error::shape(format!(
            "feature width {} vs model input {}",
            features.width(),
            model.input_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model, cfg);
    let mut grad = model.zeros_like();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let examples = sample_epoch(observed, cfg.negatives_per_positive, &mut rng);
        let mut total = 0.0;
        for batch in examples.chunks(cfg.batch_size) {
            grad.tensors_mut().into_iter().for_each(|t| t.fill(0.0));
            let scale = 1.0 / batch.len() as f64;
            for &(u, p, y) in batch {
                total += model.accumulate(&PairInput::from_features(features, u, p), y, scale, &mut grad);
            }
            adam.step(model, &grad);
        }
        let mean = total / examples.len() as f64;
        if !mean.is_finite() || !model.is_finite() {
            return Err(Error::Diverged {
                epoch,
                detail: format!("{} loss {mean}", model.kind()),
            });
        }
        on_epoch(epoch, mean);
        trace.push(mean);
    }
    Ok(trace)
}
