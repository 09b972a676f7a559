//! Single-branch training manners and the decoupling experiment.
//!
//! A manner fixes how mini-batches are drawn and how per-sample losses are
//! weighted:
//!
//! | manner | sampler  | loss weight            |
//! |--------|----------|------------------------|
//! | CE     | uniform  | 1                      |
//! | RW     | uniform  | `N / (C · N_y)`        |
//! | RS     | balanced | 1                      |
//!
//! The "feature extractor" of a network is every layer before its final
//! Affine layer; the "classifier" is that final Affine layer.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arch::Architecture;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{derive_seed, ignore_epochs, EpochMetrics, EpochObserver};
use crate::nn::{lr_at, sgd_step, softmax_xent_weighted, Affine, Layer, Network, OptimizerConfig};
use crate::sampling::{Sampler, SamplerKind};

pub(crate) const STREAM_INIT: u64 = 1;
pub(crate) const STREAM_SAMPLER: u64 = 2;
pub(crate) const STREAM_HEAD: u64 = 5;
pub(crate) const STREAM_STAGE2: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Manner {
    CE,
    RW,
    RS,
}

impl Manner {
    pub const ALL: [Manner; 3] = [Manner::CE, Manner::RW, Manner::RS];

    pub fn sampler(self) -> SamplerKind {
        match self {
            Manner::CE | Manner::RW => SamplerKind::Uniform,
            Manner::RS => SamplerKind::Balanced,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Manner::CE => "CE",
            Manner::RW => "RW",
            Manner::RS => "RS",
        }
    }
}

impl fmt::Display for Manner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Manner {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "CE" => Ok(Manner::CE),
            "RW" => Ok(Manner::RW),
            "RS" => Ok(Manner::RS),
            _ => Err(Error::Config(format!("unknown manner {s:?} (expected CE, RW or RS)"))),
        }
    }
}

/// Second-stage re-balancing for the deferred baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Rebalance {
    DRW,
    DRS,
}

impl Rebalance {
    pub fn manner(self) -> Manner {
        match self {
            Rebalance::DRW => Manner::RW,
            Rebalance::DRS => Manner::RS,
        }
    }

    /// Row label used in result tables.
    pub fn method_name(self) -> &'static str {
        match self {
            Rebalance::DRW => "CE-DRW",
            Rebalance::DRS => "CE-DRS",
        }
    }
}

impl FromStr for Rebalance {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "drw" => Ok(Rebalance::DRW),
            "drs" => Ok(Rebalance::DRS),
            _ => Err(Error::Config(format!("unknown re-balancing stage {s:?} (expected drw or drs)"))),
        }
    }
}

/// Epoch count, batch size and optimizer for one training phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        self.optimizer.validate()
    }
}

/// Inverse-frequency loss weights `1/N_i`, rescaled so the mean weight over
/// all training samples is 1, i.e. `w_i = N / (C · N_i)`.
pub fn reweight_factors(class_counts: &[usize]) -> Result<Vec<f64>> {
    if let Some(i) = class_counts.iter().position(|&n| n == 0) {
        return Err(Error::Data(format!("class {i} has zero samples")));
    }
    let n: usize = class_counts.iter().sum();
    let c = class_counts.len() as f64;
    Ok(class_counts.iter().map(|&ni| n as f64 / (c * ni as f64)).collect())
}

/// Balanced error rate of a network's argmax predictions.
pub fn evaluate(net: &Network, ds: &Dataset) -> Result<f64> {
    let logits = net.predict(ds.features())?;
    Ok(error_rate(&logits.argmax_rows(), ds.labels()))
}

pub fn error_rate(predicted: &[usize], labels: &[usize]) -> f64 {
    let wrong = predicted.iter().zip(labels).filter(|(p, y)| p != y).count();
    wrong as f64 / labels.len() as f64
}

/// Baseline network with the shared architecture, initialized from `seed`.
pub fn build_network(arch: &Architecture, input: usize, classes: usize, seed: u64) -> Result<Network> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_INIT));
    Network::mlp(&arch.plain_dims(input, classes), false, &mut rng)
}

pub(crate) struct FitPlan<'a> {
    pub sampler: SamplerKind,
    pub class_weights: Option<Vec<f64>>,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: &'a OptimizerConfig,
    pub lr: &'a dyn Fn(usize) -> f64,
    pub sampler_seed: u64,
    pub first_epoch: usize,
    pub observer: &'a mut EpochObserver<'a>,
}

pub(crate) fn fit(net: &mut Network, train: &Dataset, test: Option<&Dataset>, plan: FitPlan<'_>) -> Result<Vec<EpochMetrics>> {
    if plan.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut sampler = Sampler::new(plan.sampler, train.labels(), train.num_classes(), plan.sampler_seed)?;
    let steps = sampler.steps_per_epoch(plan.batch_size);
    let mut history = Vec::with_capacity(plan.epochs);
    for e in 0..plan.epochs {
        let lr = (plan.lr)(e);
        let mut loss_sum = 0.0;
        for _ in 0..steps {
            let idx = sampler.next_batch(plan.batch_size);
            let (x, y) = train.batch(&idx);
            let weights: Option<Vec<f64>> = plan.class_weights.as_ref().map(|w| y.iter().map(|&c| w[c]).collect());
            let acts = net.forward(&x)?;
            let (loss, grad) = softmax_xent_weighted(acts.output(), &y, weights.as_deref())?;
            if !loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss at epoch {}", plan.first_epoch + e)));
            }
            loss_sum += loss;
            net.zero_grad();
            net.backward(&acts, &grad)?;
            sgd_step(net.params_mut(), plan.optimizer, lr)?;
        }
        let test_error = test.map(|t| evaluate(net, t)).transpose()?;
        let row = EpochMetrics {
            epoch: plan.first_epoch + e,
            alpha: None,
            lr,
            train_loss: loss_sum / steps as f64,
            test_error,
        };
        (plan.observer)(&row)?;
        history.push(row);
    }
    Ok(history)
}

/// Trains `net` end to end with one manner, using `lr_at` over
/// `config.epochs`. Per-epoch test error is recorded when `test` is given.
pub fn train_manner(
    net: &mut Network,
    train: &Dataset,
    manner: Manner,
    config: &TrainConfig,
    seed: u64,
    test: Option<&Dataset>,
) -> Result<Vec<EpochMetrics>> {
    train_manner_observed(net, train, manner, config, seed, test, &mut ignore_epochs)
}

/// [`train_manner`], reporting each epoch to `observer` as it completes.
pub fn train_manner_observed(
    net: &mut Network,
    train: &Dataset,
    manner: Manner,
    config: &TrainConfig,
    seed: u64,
    test: Option<&Dataset>,
    observer: &mut EpochObserver<'_>,
) -> Result<Vec<EpochMetrics>> {
    config.validate()?;
    let class_weights = match manner {
        Manner::RW => Some(reweight_factors(train.class_counts())?),
        Manner::CE | Manner::RS => None,
    };
    let schedule = |e: usize| lr_at(e, &config.optimizer);
    fit(
        net,
        train,
        test,
        FitPlan {
            sampler: manner.sampler(),
            class_weights,
            epochs: config.epochs,
            batch_size: config.batch_size,
            optimizer: &config.optimizer,
            lr: &schedule,
            sampler_seed: derive_seed(seed, STREAM_SAMPLER),
            first_epoch: 0,
            observer,
        },
    )
}

/// Plain cross-entropy training with an arbitrary sampler (used for the
/// ensemble members trained with balanced or reversed batches).
pub fn train_with_sampler(
    net: &mut Network,
    train: &Dataset,
    sampler: SamplerKind,
    config: &TrainConfig,
    seed: u64,
    test: Option<&Dataset>,
) -> Result<Vec<EpochMetrics>> {
    config.validate()?;
    let schedule = |e: usize| lr_at(e, &config.optimizer);
    fit(
        net,
        train,
        test,
        FitPlan {
            sampler,
            class_weights: None,
            epochs: config.epochs,
            batch_size: config.batch_size,
            optimizer: &config.optimizer,
            lr: &schedule,
            sampler_seed: derive_seed(seed, STREAM_SAMPLER),
            first_epoch: 0,
            observer: &mut ignore_epochs,
        },
    )
}

/// Splits a network into (feature extractor, classifier) at its last Affine
/// layer.
pub fn split_classifier(net: &Network) -> Result<(Network, Affine)> {
    let at = net
        .layers()
        .iter()
        .rposition(|l| matches!(l, Layer::Affine(_)))
        .ok_or_else(|| Error::Config("network has no Affine layer".into()))?;
    let (extractor, rest) = net.split_at(at);
    match &rest.layers()[0] {
        Layer::Affine(a) => Ok((extractor, a.clone())),
        Layer::Relu => unreachable!(),
    }
}

/// Outcome of classifier retraining on frozen features.
#[derive(Debug, Clone)]
pub struct Retrained {
    pub classifier: Network,
    pub test_error: f64,
}

/// Retrains a fresh linear classifier over frozen features.
///
/// `extractor` is applied to both splits once; only the new classifier is
/// optimized.
pub fn retrain_on_extractor(
    extractor: &Network,
    manner: Manner,
    train: &Dataset,
    test: &Dataset,
    config: &TrainConfig,
    seed: u64,
) -> Result<Retrained> {
    let train_feats = train.with_features(extractor.predict(train.features())?)?;
    let test_feats = test.with_features(extractor.predict(test.features())?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_HEAD));
    let head = Affine::init(train_feats.dim(), train.num_classes(), &mut rng);
    let mut classifier = Network::new(vec![Layer::Affine(head)])?;
    train_manner(&mut classifier, &train_feats, manner, config, seed, None)?;
    let test_error = evaluate(&classifier, &test_feats)?;
    Ok(Retrained { classifier, test_error })
}

/// Freezes everything below the final Affine layer of `trained` and
/// retrains a fresh classifier with `manner`.
pub fn freeze_and_retrain_classifier(
    trained: &Network,
    manner: Manner,
    train: &Dataset,
    test: &Dataset,
    config: &TrainConfig,
    seed: u64,
) -> Result<Retrained> {
    let (extractor, _) = split_classifier(trained)?;
    retrain_on_extractor(&extractor, manner, train, test, config, seed)
}

/// Feature extractor trained on one dataset, classifier retrained on
/// another.
pub fn cross_dataset_transfer(
    trained_on_a: &Network,
    train_b: &Dataset,
    test_b: &Dataset,
    manner: Manner,
    config: &TrainConfig,
    seed: u64,
) -> Result<Retrained> {
    let (extractor, _) = split_classifier(trained_on_a)?;
    match extractor.in_dim() {
        Some(d) if d == train_b.dim() && d == test_b.dim() => {}
        other => {
            return Err(Error::Config(format!(
                "feature extractor expects width {other:?}, dataset B has width {}",
                train_b.dim()
            )))
        }
    }
    retrain_on_extractor(&extractor, manner, train_b, test_b, config, seed)
}

/// Continues CE training of the full network with re-weighting (DRW) or
/// class-balanced sampling (DRS) at a constant small learning rate.
#[allow(clippy::too_many_arguments)]
pub fn two_stage_finetune(
    net: &mut Network,
    train: &Dataset,
    rebalance: Rebalance,
    stage2_epochs: usize,
    stage2_lr: f64,
    config: &TrainConfig,
    seed: u64,
    test: Option<&Dataset>,
) -> Result<Vec<EpochMetrics>> {
    two_stage_finetune_observed(net, train, rebalance, stage2_epochs, stage2_lr, config, seed, test, &mut ignore_epochs)
}

/// [`two_stage_finetune`], reporting each stage-2 epoch to `observer`.
#[allow(clippy::too_many_arguments)]
pub fn two_stage_finetune_observed(
    net: &mut Network,
    train: &Dataset,
    rebalance: Rebalance,
    stage2_epochs: usize,
    stage2_lr: f64,
    config: &TrainConfig,
    seed: u64,
    test: Option<&Dataset>,
    observer: &mut EpochObserver<'_>,
) -> Result<Vec<EpochMetrics>> {
    config.validate()?;
    if !(stage2_lr > 0.0 && stage2_lr < config.optimizer.base_lr) {
        return Err(Error::Config(format!(
            "stage-2 learning rate {stage2_lr} must be positive and below base_lr {}",
            config.optimizer.base_lr
        )));
    }
    let manner = rebalance.manner();
    let class_weights = match manner {
        Manner::RW => Some(reweight_factors(train.class_counts())?),
        _ => None,
    };
    let constant = move |_: usize| stage2_lr;
    fit(
        net,
        train,
        test,
        FitPlan {
            sampler: manner.sampler(),
            class_weights,
            epochs: stage2_epochs,
            batch_size: config.batch_size,
            optimizer: &config.optimizer,
            lr: &constant,
            sampler_seed: derive_seed(seed, STREAM_STAGE2),
            first_epoch: config.epochs,
            observer,
        },
    )
}

/// Errors of the 3×3 decoupling experiment, indexed
/// `[representation manner][classifier manner]` in [`Manner::ALL`] order.
pub type Grid = [[f64; 3]; 3];

#[derive(Debug, Clone, PartialEq)]
pub struct DecoupleGridResult {
    /// Mean over seeds.
    pub mean: Grid,
    pub per_seed: Vec<Grid>,
    pub seeds: Vec<u64>,
    pub runtime_ms: u128,
}

impl DecoupleGridResult {
    /// Rows: representation manner; columns: classifier manner.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("representation,CE,RW,RS\n");
        for (m, row) in Manner::ALL.iter().zip(&self.mean) {
            out.push_str(&format!("{},{},{},{}\n", m, row[0], row[1], row[2]));
        }
        out
    }
}

/// Stage-1 (representation) and stage-2 (classifier) phases of the
/// decoupling experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoupleConfig {
    pub arch: Architecture,
    pub representation: TrainConfig,
    pub classifier: TrainConfig,
}

/// One seed of the grid: three end-to-end trainings, nine retrainings.
pub fn decouple_grid_seed(train: &Dataset, test: &Dataset, config: &DecoupleConfig, seed: u64) -> Result<Grid> {
    let mut grid = [[0.0; 3]; 3];
    for (r, &rep) in Manner::ALL.iter().enumerate() {
        let mut net = build_network(&config.arch, train.dim(), train.num_classes(), seed)?;
        train_manner(&mut net, train, rep, &config.representation, seed, None)?;
        let (extractor, _) = split_classifier(&net)?;
        for (c, &cls) in Manner::ALL.iter().enumerate() {
            grid[r][c] = retrain_on_extractor(&extractor, cls, train, test, &config.classifier, seed)?.test_error;
        }
    }
    Ok(grid)
}

/// Runs the grid for every seed (in parallel) and averages.
pub fn decouple_grid(train: &Dataset, test: &Dataset, config: &DecoupleConfig, seeds: &[u64]) -> Result<DecoupleGridResult> {
    if seeds.is_empty() {
        return Err(Error::Config("decouple_grid needs at least one seed".into()));
    }
    let start = Instant::now();
    let per_seed: Vec<Grid> = seeds
        .par_iter()
        .map(|&s| decouple_grid_seed(train, test, config, s))
        .collect::<Result<_>>()?;
    let mut mean = [[0.0; 3]; 3];
    for g in &per_seed {
        for r in 0..3 {
            for c in 0..3 {
                mean[r][c] += g[r][c] / per_seed.len() as f64;
            }
        }
    }
    Ok(DecoupleGridResult {
        mean,
        per_seed,
        seeds: seeds.to_vec(),
        runtime_ms: start.elapsed().as_millis(),
    })
}
