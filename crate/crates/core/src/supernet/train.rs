//! SGD with momentum, cosine annealing, supernet training under random
//! architecture weights, and fitness evaluation.

use serde::{Deserialize, Serialize};

use super::{ParamSet, Supernet, SupernetError};
use crate::archspace::{sample_arch, DiscreteArch};
use crate::dataset::{batches, BatchPlan, Dataset};
use crate::rng::{derive_seed, seeded, tag};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 20, learning_rate: 0.025, momentum: 0.9, weight_decay: 3e-4, batch_size: 32, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), SupernetError> {
        let bad = |m: &str| Err(SupernetError::InvalidConfig(m.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay must be non-negative");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        Ok(())
    }
}

/// `eta_max * (1 + cos(pi * epoch / total_epochs)) / 2`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, eta_max: f64) -> f64 {
    debug_assert!(epoch < total_epochs);
    eta_max * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / total_epochs as f64).cos())
}

/// One momentum step over every parameter:
/// `v <- momentum * v + (g + weight_decay * w)`, then `w <- w - lr * v`.
pub fn sgd_step(
    params: &mut ParamSet,
    grads: &ParamSet,
    velocity: &mut ParamSet,
    lr: f64,
    momentum: f64,
    weight_decay: f64,
) {
    for ((w, g), v) in params.tensors_mut().into_iter().zip(grads.tensors()).zip(velocity.tensors_mut()) {
        debug_assert_eq!(w.len(), g.len());
        for ((wi, gi), vi) in w.iter_mut().zip(g).zip(v.iter_mut()) {
            *vi = momentum * *vi + (gi + weight_decay * *wi);
            *wi -= lr * *vi;
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainStats {
    /// Mean mini-batch loss of each epoch.
    pub epoch_loss: Vec<f64>,
    pub steps: usize,
}

/// Trains the supernet's weights. Each mini-batch runs the mixed forward
/// pass under a freshly sampled uniform architecture, so no single
/// sub-network dominates the updates. Momentum restarts at zero.
pub fn train_supernet(net: &mut Supernet, train: &Dataset, config: &TrainConfig) -> Result<TrainStats, SupernetError> {
    config.validate()?;
    if train.feature_dim() != net.feature_dim() || train.class_count() != net.class_count() {
        return Err(SupernetError::DimensionMismatch(format!(
            "data is {}-dim with {} classes, supernet expects {}-dim with {}",
            train.feature_dim(),
            train.class_count(),
            net.feature_dim(),
            net.class_count()
        )));
    }
    let mut arch_rng = seeded(derive_seed(config.seed, &[tag::TRAIN]));
    let plan = BatchPlan { batch_size: config.batch_size, seed: config.seed };
    let mut velocity = net.params().zeros_like();
    let mut stats = TrainStats::default();
    for epoch in 0..config.epochs {
        let lr = cosine_lr(epoch, config.epochs, config.learning_rate);
        let mut total = 0.0;
        let epoch_batches = batches(train, plan, epoch);
        for batch in &epoch_batches {
            let arch = sample_arch(net.space(), &mut arch_rng);
            let pass = net.forward_mixed(&arch, &batch.features)?;
            let (loss, grads) = net.loss_and_backward(&pass, &batch.labels)?;
            sgd_step(net.params_mut(), &grads, &mut velocity, lr, config.momentum, config.weight_decay);
            total += loss;
            stats.steps += 1;
        }
        if !net.params().all_finite() {
            return Err(SupernetError::NonFinite(format!("parameters after epoch {epoch}")));
        }
        stats.epoch_loss.push(total / epoch_batches.len().max(1) as f64);
    }
    Ok(stats)
}

/// Top-1 validation accuracy of `arch` selected inside the supernet.
pub fn evaluate_fitness(net: &Supernet, arch: &DiscreteArch, val: &Dataset) -> Result<f64, SupernetError> {
    if val.is_empty() {
        return Err(SupernetError::EmptyValidation);
    }
    let pass = net.forward_discrete(arch, val.features())?;
    let correct = pass.predictions().iter().zip(val.labels()).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / val.len() as f64)
}
