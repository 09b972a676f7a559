use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{AdaptorSchedule, BbnModel};
use crate::baselines::error_rate;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{derive_seed, ignore_epochs, EpochMetrics, EpochObserver};
use crate::nn::{lr_at, sgd_step, OptimizerConfig};
use crate::sampling::{Sampler, SamplerKind};

const STREAM_UNIFORM: u64 = 2;
const STREAM_REBALANCE: u64 = 3;
const STREAM_ALPHA: u64 = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BbnTrainConfig {
    /// Total epochs `T_max`.
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub schedule: AdaptorSchedule,
    /// Sampler feeding the re-balancing branch.
    #[serde(default = "reversed")]
    pub rebalancing_sampler: SamplerKind,
}

fn reversed() -> SamplerKind {
    SamplerKind::Reversed
}

impl BbnTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("T_max must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if let AdaptorSchedule::Fixed(a) = self.schedule {
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("fixed alpha {a} outside [0, 1]")));
            }
        }
        self.optimizer.validate()
    }
}

/// Bilateral training.
///
/// Epoch `e` (zero-based) is step `T = e + 1` of `T_max`; `α` is drawn once
/// per epoch. Every step pairs a uniform batch with an equally sized batch
/// from the re-balancing sampler, and an epoch is `ceil(N / batch_size)`
/// steps.
pub fn train_bbn(
    model: &mut BbnModel,
    train: &Dataset,
    config: &BbnTrainConfig,
    seed: u64,
    test: Option<&Dataset>,
) -> Result<Vec<EpochMetrics>> {
    train_bbn_observed(model, train, config, seed, test, &mut ignore_epochs)
}

/// [`train_bbn`], reporting each epoch to `observer` as it completes.
pub fn train_bbn_observed(
    model: &mut BbnModel,
    train: &Dataset,
    config: &BbnTrainConfig,
    seed: u64,
    test: Option<&Dataset>,
    observer: &mut EpochObserver<'_>,
) -> Result<Vec<EpochMetrics>> {
    config.validate()?;
    if train.dim() != model.input_dim() || train.num_classes() != model.num_classes() {
        return Err(Error::Config(format!(
            "model expects {} features / {} classes, dataset has {} / {}",
            model.input_dim(),
            model.num_classes(),
            train.dim(),
            train.num_classes()
        )));
    }
    let mut uniform = Sampler::new(
        SamplerKind::Uniform,
        train.labels(),
        train.num_classes(),
        derive_seed(seed, STREAM_UNIFORM),
    )?;
    let mut rebalancing = Sampler::new(
        config.rebalancing_sampler,
        train.labels(),
        train.num_classes(),
        derive_seed(seed, STREAM_REBALANCE),
    )?;
    let mut alpha_rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_ALPHA));
    let steps = uniform.steps_per_epoch(config.batch_size);
    let mut history = Vec::with_capacity(config.epochs);
    for e in 0..config.epochs {
        let alpha = config.schedule.alpha(e + 1, config.epochs, &mut alpha_rng)?;
        let lr = lr_at(e, &config.optimizer);
        let mut loss_sum = 0.0;
        for _ in 0..steps {
            let idx_c = uniform.next_batch(config.batch_size);
            let idx_r = rebalancing.next_batch(idx_c.len());
            let (x_c, y_c) = train.batch(&idx_c);
            let (x_r, y_r) = train.batch(&idx_r);
            model.zero_grad();
            let loss = model.accumulate_gradients(&x_c, &y_c, &x_r, &y_r, alpha)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("bilateral loss at epoch {e}")));
            }
            loss_sum += loss;
            sgd_step(model.active_params_mut(alpha != 0.0, alpha != 1.0), &config.optimizer, lr)?;
        }
        let test_error = test.map(|t| evaluate_bbn(model, t)).transpose()?;
        let row = EpochMetrics {
            epoch: e,
            alpha: Some(alpha),
            lr,
            train_loss: loss_sum / steps as f64,
            test_error,
        };
        observer(&row)?;
        history.push(row);
    }
    Ok(history)
}

/// Error rate of the α = 0.5 inference rule.
pub fn evaluate_bbn(model: &BbnModel, ds: &Dataset) -> Result<f64> {
    let (pred, _) = model.infer(ds.features())?;
    Ok(error_rate(&pred, ds.labels()))
}
