use serde::{Deserialize, Serialize};

use super::Parameter;
use crate::error::{Error, Result};

/// SGD-with-momentum hyperparameters and the step learning-rate schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    /// Epochs at which the rate is multiplied by `decay_factor`.
    pub milestones: Vec<usize>,
    pub decay_factor: f64,
}

impl Default for OptimizerConfig {
    /// CIFAR recipe: lr 0.1, momentum 0.9, wd 2e-4, five warm-up epochs,
    /// decay by 0.01 at epochs 120 and 160 (of 200).
    fn default() -> Self {
        Self {
            base_lr: 0.1,
            momentum: 0.9,
            weight_decay: 2e-4,
            warmup_epochs: 5,
            milestones: vec![120, 160],
            decay_factor: 0.01,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::Config(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config(format!(
                "decay_factor must lie in (0, 1], got {}",
                self.decay_factor
            )));
        }
        if self.milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "milestones must be strictly increasing: {:?}",
                self.milestones
            )));
        }
        if let Some(&m) = self.milestones.first() {
            if m <= self.warmup_epochs {
                return Err(Error::Config(format!(
                    "milestone {m} falls inside the {}-epoch warm-up",
                    self.warmup_epochs
                )));
            }
        }
        Ok(())
    }

    /// Same recipe with milestones rescaled from a `from_epochs` horizon to
    /// `to_epochs` (rounded, kept strictly increasing and past warm-up).
    pub fn rescaled(&self, from_epochs: usize, to_epochs: usize) -> Self {
        let mut milestones: Vec<usize> = Vec::new();
        for &m in &self.milestones {
            let scaled = ((m as f64) * (to_epochs as f64) / (from_epochs as f64)).round() as usize;
            let floor = milestones.last().map_or(self.warmup_epochs + 1, |&p| p + 1);
            milestones.push(scaled.max(floor));
        }
        Self {
            milestones,
            ..self.clone()
        }
    }
}

/// Learning rate for a zero-based epoch.
///
/// During warm-up the rate ramps linearly as `(epoch+1)/warmup · base_lr`;
/// afterwards it is `base_lr · decay_factor^k` where `k` counts milestones
/// already reached.
pub fn lr_at(epoch: usize, config: &OptimizerConfig) -> f64 {
    if epoch < config.warmup_epochs {
        return config.base_lr * ((epoch + 1) as f64 / config.warmup_epochs as f64);
    }
    let passed = config.milestones.iter().filter(|&&m| epoch >= m).count();
    config.base_lr * config.decay_factor.powi(passed as i32)
}

/// One SGD step with momentum and coupled weight decay:
///
/// ```text
/// buf   <- momentum * buf + (grad + weight_decay * value)
/// value <- value - lr * buf
/// ```
///
/// `lr == 0` is a no-op. Negative or non-finite rates are rejected.
pub fn sgd_step<'a, I>(params: I, config: &OptimizerConfig, lr: f64) -> Result<()>
where
    I: IntoIterator<Item = &'a mut Parameter>,
{
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be nonnegative and finite, got {lr}")));
    }
    if lr == 0.0 {
        return Ok(());
    }
    let (mu, wd) = (config.momentum, config.weight_decay);
    for p in params {
        let value = p.value.values_mut();
        let buf = p.momentum.values_mut();
        for ((v, b), &g) in value.iter_mut().zip(buf.iter_mut()).zip(p.grad.values()) {
            *b = mu * *b + (g + wd * *v);
            *v -= lr * *b;
        }
    }
    Ok(())
}
