use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::ModelParams;
use crate::tensor::{Element, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimConfig {
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self { base_lr: 0.1, warmup_steps: 50, total_steps: 600, momentum: 0.9, weight_decay: 1e-4, batch_size: 8, seed: 0 }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.warmup_steps >= self.total_steps {
            return Err(Error::config(format!(
                "warmup_steps {} must be below total_steps {}",
                self.warmup_steps, self.total_steps
            )));
        }
        if !(self.base_lr > 0.0) || self.batch_size == 0 || !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(Error::config("learning rate and batch size must be positive, momentum in [0,1)"));
        }
        Ok(())
    }
}

/// Linear warmup from 0 to `base_lr`, then cosine decay to 0 at `total_steps`.
pub fn lr_at(step: usize, cfg: &OptimConfig) -> Result<f64> {
    if step > cfg.total_steps {
        return Err(Error::contract(format!("step {step} beyond total_steps {}", cfg.total_steps)));
    }
    if step < cfg.warmup_steps {
        return Ok(cfg.base_lr * step as f64 / cfg.warmup_steps as f64);
    }
    let span = (cfg.total_steps - cfg.warmup_steps).max(1) as f64;
    let progress = (step - cfg.warmup_steps) as f64 / span;
    Ok(cfg.base_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
}

/// Momentum SGD with coupled weight decay over every tensor named in
/// `grads`: `v = m*v + g + wd*p; p -= lr*v`. Nothing is updated when any
/// gradient is non-finite.
pub fn sgd_momentum_step<E: Element>(
    params: &mut ModelParams<E>,
    grads: &ModelParams<E>,
    velocity: &mut ModelParams<E>,
    lr: f64,
    cfg: &OptimConfig,
) -> Result<()> {
    for (name, g) in grads.iter() {
        if !g.all_finite() {
            return Err(Error::Divergence(format!("non-finite gradient for {name}")));
        }
        if params.get(name)?.shape() != g.shape() {
            return Err(Error::shape(format!("{name}: gradient shape {:?} vs parameter", g.shape())));
        }
    }
    let (m, wd, lr) = (E::of(cfg.momentum), E::of(cfg.weight_decay), E::of(lr));
    for (name, g) in grads.iter() {
        if !velocity.contains(name) {
            velocity.insert(name, Tensor::zeros(g.shape()))?;
        }
        let v = velocity.get_mut(name)?;
        let p = params.get_mut(name)?;
        for ((v, p), &g) in v.data_mut().iter_mut().zip(p.data_mut()).zip(g.data()) {
            *v = m * *v + g + wd * *p;
            *p -= lr * *v;
        }
    }
    Ok(())
}
