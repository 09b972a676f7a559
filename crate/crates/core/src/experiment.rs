//! Desk-scale benchmark: a synthetic long-tailed Gaussian mixture and the
//! per-seed runners behind every result table.
//!
//! [`SeedRun`] trains each model at most once per seed, so the method
//! table, the ablations and the diagnostics share networks.

use serde::{Deserialize, Serialize};

use crate::analysis::{classifier_norms, compactness, ensemble_eval, feature_quality_eval, spearman, NormReport, NormSource};
use crate::arch::Architecture;
use crate::baselines::{
    build_network, evaluate, freeze_and_retrain_classifier, split_classifier, train_manner, train_manner_observed,
    train_with_sampler, two_stage_finetune_observed, DecoupleConfig, Manner, Rebalance, TrainConfig,
};
use crate::bbn::{evaluate_bbn, train_bbn, AdaptorSchedule, BbnModel, BbnTrainConfig};
use crate::data::{make_balanced_test, make_counts, synth_dataset, Dataset, ImbalanceProfile, SyntheticSpec};
use crate::error::{Error, Result};
use crate::metrics::{derive_seed, ignore_epochs, EpochObserver};
use crate::nn::{Network, OptimizerConfig};
use crate::sampling::SamplerKind;

const STREAM_MEANS: u64 = 20;
const STREAM_SAMPLES: u64 = 21;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub num_classes: usize,
    pub n_max: usize,
    pub beta: f64,
    pub dim: usize,
    /// Class means are `separation · N(0, I)`, restricted to a random
    /// `latent_dim`-dimensional subspace when that is set.
    pub separation: f64,
    #[serde(default)]
    pub latent_dim: Option<usize>,
    pub noise_scale: f64,
    pub test_per_class: usize,
    pub arch: Architecture,
    /// End-to-end training (baselines and BBN).
    pub train: TrainConfig,
    /// Classifier retraining on frozen features.
    pub classifier: TrainConfig,
    /// Length of the CE stage of CE-DRW / CE-DRS; the remaining epochs are
    /// the re-balancing stage.
    pub deferred_epoch: usize,
    /// Stage-2 learning rate as a fraction of `base_lr`.
    pub stage2_lr_factor: f64,
    pub schedule: AdaptorSchedule,
    /// Classifier manner used when scoring representation quality.
    pub retrain_manner: Manner,
}

impl BenchmarkConfig {
    /// C = 10, n_max = 500, β = 50, d = 20, 60 epochs, batch 64.
    ///
    /// The optimizer is the CIFAR recipe compressed to 60 epochs, except
    /// for `base_lr = 0.03`: at 0.1 re-weighted training diverges on this
    /// mixture (tail weights reach ~14).
    pub fn desk_scale() -> Self {
        let epochs = 60;
        let optimizer = OptimizerConfig {
            base_lr: 0.03,
            ..OptimizerConfig::default().rescaled(200, epochs)
        };
        Self {
            num_classes: 10,
            n_max: 500,
            beta: 50.0,
            dim: 20,
            separation: 1.0,
            latent_dim: None,
            noise_scale: 1.0,
            test_per_class: 200,
            arch: Architecture::default(),
            train: TrainConfig {
                epochs,
                batch_size: 64,
                optimizer: optimizer.clone(),
            },
            classifier: TrainConfig {
                epochs: 30,
                batch_size: 64,
                optimizer: optimizer.rescaled(epochs, 30),
            },
            deferred_epoch: optimizer.milestones[0],
            stage2_lr_factor: 0.01,
            schedule: AdaptorSchedule::ParabolicDecay,
            retrain_manner: Manner::RW,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.counts()?;
        self.arch.validate()?;
        self.train.validate()?;
        self.classifier.validate()?;
        if self.deferred_epoch > self.train.epochs {
            return Err(Error::Config(format!(
                "deferred_epoch {} exceeds {} training epochs",
                self.deferred_epoch, self.train.epochs
            )));
        }
        if !(self.stage2_lr_factor > 0.0 && self.stage2_lr_factor < 1.0) {
            return Err(Error::Config(format!("stage2_lr_factor must lie in (0, 1), got {}", self.stage2_lr_factor)));
        }
        if self.test_per_class == 0 || self.dim == 0 {
            return Err(Error::Config("test_per_class and dim must be positive".into()));
        }
        Ok(())
    }

    pub fn counts(&self) -> Result<Vec<usize>> {
        make_counts(&ImbalanceProfile {
            num_classes: self.num_classes,
            n_max: self.n_max,
            beta: self.beta,
        })
    }

    /// Mixture for one seed; both means and samples depend on it.
    pub fn spec(&self, seed: u64) -> Result<SyntheticSpec> {
        let (means_seed, sample_seed) = (derive_seed(seed, STREAM_MEANS), derive_seed(seed, STREAM_SAMPLES));
        match self.latent_dim {
            Some(rank) => SyntheticSpec::subspace_means(
                self.num_classes,
                self.dim,
                rank,
                self.separation,
                self.noise_scale,
                means_seed,
                sample_seed,
            ),
            None => SyntheticSpec::random_means(
                self.num_classes,
                self.dim,
                self.separation,
                self.noise_scale,
                means_seed,
                sample_seed,
            ),
        }
    }

    /// Long-tailed training split and balanced test split.
    pub fn datasets(&self, seed: u64) -> Result<(Dataset, Dataset)> {
        self.validate()?;
        let spec = self.spec(seed)?;
        Ok((synth_dataset(&spec, &self.counts()?)?, make_balanced_test(&spec, self.test_per_class)?))
    }

    pub fn bbn_config(&self, schedule: AdaptorSchedule, sampler: SamplerKind) -> BbnTrainConfig {
        BbnTrainConfig {
            epochs: self.train.epochs,
            batch_size: self.train.batch_size,
            optimizer: self.train.optimizer.clone(),
            schedule,
            rebalancing_sampler: sampler,
        }
    }

    pub fn decouple_config(&self) -> DecoupleConfig {
        DecoupleConfig {
            arch: self.arch.clone(),
            representation: self.train.clone(),
            classifier: self.classifier.clone(),
        }
    }
}

/// One labelled error rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub error: f64,
}

impl ResultRow {
    pub fn new(method: impl Into<String>, error: f64) -> Self {
        Self {
            method: method.into(),
            error,
        }
    }
}

/// Error of the row labelled `method`.
pub fn lookup(rows: &[ResultRow], method: &str) -> Option<f64> {
    rows.iter().find(|r| r.method == method).map(|r| r.error)
}

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from("method,error\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", r.method, r.error));
    }
    out
}

/// Norm profiles of the plain and bilateral classifiers.
#[derive(Debug, Clone)]
pub struct NormAnalysis {
    pub reports: Vec<NormReport>,
    /// Spearman correlation of CE per-class norms with class counts.
    pub ce_count_spearman: f64,
}

impl NormAnalysis {
    pub fn get(&self, source: NormSource) -> Option<&NormReport> {
        self.reports.iter().find(|r| r.source == source)
    }

    pub fn sigma_rows(&self) -> Vec<ResultRow> {
        self.reports.iter().map(|r| ResultRow::new(r.source.label(), r.sigma)).collect()
    }
}

/// One seed's datasets plus every model trained on them so far.
pub struct SeedRun {
    pub config: BenchmarkConfig,
    pub seed: u64,
    pub train: Dataset,
    pub test: Dataset,
    plain: Vec<(Manner, Network)>,
    reversed: Option<Network>,
    bilateral: Vec<((AdaptorSchedule, SamplerKind), BbnModel)>,
}

impl SeedRun {
    pub fn new(config: &BenchmarkConfig, seed: u64) -> Result<Self> {
        let (train, test) = config.datasets(seed)?;
        Ok(Self::with_data(config, seed, train, test))
    }

    pub fn with_data(config: &BenchmarkConfig, seed: u64, train: Dataset, test: Dataset) -> Self {
        Self {
            config: config.clone(),
            seed,
            train,
            test,
            plain: Vec::new(),
            reversed: None,
            bilateral: Vec::new(),
        }
    }

    fn fresh_network(&self) -> Result<Network> {
        build_network(&self.config.arch, self.train.dim(), self.train.num_classes(), self.seed)
    }

    /// End-to-end network trained with `manner`.
    pub fn manner_net(&mut self, manner: Manner) -> Result<&Network> {
        if let Some(i) = self.plain.iter().position(|(m, _)| *m == manner) {
            return Ok(&self.plain[i].1);
        }
        let mut net = self.fresh_network()?;
        train_manner(&mut net, &self.train, manner, &self.config.train, self.seed, None)?;
        self.plain.push((manner, net));
        Ok(&self.plain.last().unwrap().1)
    }

    /// CE network trained on reversed-sampler batches.
    pub fn reversed_net(&mut self) -> Result<&Network> {
        if self.reversed.is_none() {
            let mut net = self.fresh_network()?;
            train_with_sampler(&mut net, &self.train, SamplerKind::Reversed, &self.config.train, self.seed, None)?;
            self.reversed = Some(net);
        }
        Ok(self.reversed.as_ref().unwrap())
    }

    pub fn bbn(&mut self, schedule: AdaptorSchedule, sampler: SamplerKind) -> Result<&BbnModel> {
        let key = (schedule, sampler);
        if let Some(i) = self.bilateral.iter().position(|(k, _)| *k == key) {
            return Ok(&self.bilateral[i].1);
        }
        let mut model = BbnModel::new(&self.config.arch, self.train.dim(), self.train.num_classes(), self.seed)?;
        train_bbn(&mut model, &self.train, &self.config.bbn_config(schedule, sampler), self.seed, None)?;
        self.bilateral.push((key, model));
        Ok(&self.bilateral.last().unwrap().1)
    }

    /// BBN with the configured schedule and the reversed sampler.
    pub fn default_bbn(&mut self) -> Result<&BbnModel> {
        let schedule = self.config.schedule;
        self.bbn(schedule, SamplerKind::Reversed)
    }

    pub fn two_stage(&self, rebalance: Rebalance) -> Result<Network> {
        self.two_stage_observed(rebalance, None, &mut ignore_epochs)
    }

    /// [`SeedRun::two_stage`], reporting both stages' epochs to `observer`
    /// in one increasing sequence.
    pub fn two_stage_observed(&self, rebalance: Rebalance, test: Option<&Dataset>, observer: &mut EpochObserver<'_>) -> Result<Network> {
        let cfg = &self.config;
        let stage1 = TrainConfig {
            epochs: cfg.deferred_epoch,
            ..cfg.train.clone()
        };
        let mut net = self.fresh_network()?;
        train_manner_observed(&mut net, &self.train, Manner::CE, &stage1, self.seed, test, observer)?;
        two_stage_finetune_observed(
            &mut net,
            &self.train,
            rebalance,
            cfg.train.epochs - cfg.deferred_epoch,
            cfg.train.optimizer.base_lr * cfg.stage2_lr_factor,
            &stage1,
            self.seed,
            test,
            observer,
        )?;
        Ok(net)
    }

    pub fn manner_rows(&mut self) -> Result<Vec<ResultRow>> {
        let mut rows = Vec::new();
        for m in Manner::ALL {
            self.manner_net(m)?;
            rows.push(ResultRow::new(m.name(), evaluate(self.cached(m), &self.test)?));
        }
        Ok(rows)
    }

    pub fn two_stage_rows(&self) -> Result<Vec<ResultRow>> {
        [Rebalance::DRW, Rebalance::DRS]
            .into_iter()
            .map(|r| Ok(ResultRow::new(r.method_name(), evaluate(&self.two_stage(r)?, &self.test)?)))
            .collect()
    }

    pub fn bbn_error(&mut self) -> Result<f64> {
        let test = self.test.clone();
        evaluate_bbn(self.default_bbn()?, &test)
    }

    /// CE, RW, RS, CE-DRW, CE-DRS, BBN.
    pub fn method_table(&mut self) -> Result<Vec<ResultRow>> {
        let mut rows = self.manner_rows()?;
        rows.extend(self.two_stage_rows()?);
        rows.push(ResultRow::new("BBN", self.bbn_error()?));
        Ok(rows)
    }

    /// Re-balancing branch fed by each sampler in turn.
    pub fn sampler_ablation(&mut self) -> Result<Vec<ResultRow>> {
        let schedule = self.config.schedule;
        let test = self.test.clone();
        SamplerKind::ALL
            .into_iter()
            .map(|k| Ok(ResultRow::new(k.name(), evaluate_bbn(self.bbn(schedule, k)?, &test)?)))
            .collect()
    }

    /// One row per adaptor strategy.
    pub fn adaptor_ablation(&mut self) -> Result<Vec<ResultRow>> {
        let test = self.test.clone();
        AdaptorSchedule::TABLE
            .into_iter()
            .map(|s| Ok(ResultRow::new(s.label(), evaluate_bbn(self.bbn(s, SamplerKind::Reversed)?, &test)?)))
            .collect()
    }

    /// Classifier retrained on frozen CE / RW / RS / BBN-CB / BBN-RB
    /// representations.
    pub fn feature_quality(&mut self) -> Result<Vec<ResultRow>> {
        let (manner, classifier, seed) = (self.config.retrain_manner, self.config.classifier.clone(), self.seed);
        let (train, test) = (self.train.clone(), self.test.clone());
        let mut rows = Vec::new();
        for m in Manner::ALL {
            let net = self.manner_net(m)?;
            let r = freeze_and_retrain_classifier(net, manner, &train, &test, &classifier, seed)?;
            rows.push(ResultRow::new(m.name(), r.test_error));
        }
        let q = feature_quality_eval(self.default_bbn()?, &train, &test, manner, &classifier, seed)?;
        rows.push(ResultRow::new(NormSource::BbnCb.label(), q.conventional.test_error));
        rows.push(ResultRow::new(NormSource::BbnRb.label(), q.rebalancing.test_error));
        Ok(rows)
    }

    /// BBN against the two probability-averaging ensembles.
    pub fn ensembles(&mut self) -> Result<Vec<ResultRow>> {
        let test = self.test.clone();
        let bbn = self.bbn_error()?;
        self.manner_net(Manner::CE)?;
        self.manner_net(Manner::RS)?;
        self.reversed_net()?;
        let uniform = self.cached(Manner::CE);
        let balanced = self.cached(Manner::RS);
        let reversed = self.reversed.as_ref().unwrap();
        Ok(vec![
            ResultRow::new("Uniform + Balanced", ensemble_eval(uniform, balanced, &test)?),
            ResultRow::new("Uniform + Reversed", ensemble_eval(uniform, reversed, &test)?),
            ResultRow::new("BBN", bbn),
        ])
    }

    fn cached(&self, manner: Manner) -> &Network {
        &self.plain.iter().find(|(m, _)| *m == manner).unwrap().1
    }

    /// Per-class classifier norms of CE, RW, RS and the bilateral model.
    pub fn norms(&mut self) -> Result<NormAnalysis> {
        let mut reports = Vec::new();
        for (m, source) in [(Manner::CE, NormSource::CE), (Manner::RW, NormSource::RW), (Manner::RS, NormSource::RS)] {
            let (_, head) = split_classifier(self.manner_net(m)?)?;
            reports.push(classifier_norms(&head.weight.value, source)?);
        }
        let model = self.default_bbn()?;
        reports.push(classifier_norms(&model.w_c.value, NormSource::BbnCb)?);
        reports.push(classifier_norms(&model.w_r.value, NormSource::BbnRb)?);
        reports.push(classifier_norms(&model.combined_classifier(), NormSource::BbnAll)?);
        let counts: Vec<f64> = self.train.class_counts().iter().map(|&c| c as f64).collect();
        let ce_count_spearman = spearman(&reports[0].per_class_norm, &counts);
        Ok(NormAnalysis {
            reports,
            ce_count_spearman,
        })
    }

    /// Mean intra-class distance (unit-normalized features of the training
    /// split) per representation manner, averaged over the `head` largest
    /// classes.
    pub fn compactness(&mut self, head: usize) -> Result<Vec<ResultRow>> {
        let counts = self.train.class_counts().to_vec();
        let mut order: Vec<usize> = (0..counts.len()).collect();
        order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
        let head_classes = &order[..head.min(order.len())];
        let train = self.train.clone();
        let mut rows = Vec::new();
        for m in Manner::ALL {
            let (extractor, _) = split_classifier(self.manner_net(m)?)?;
            let feats = extractor.predict(train.features())?;
            let report = compactness(&feats, train.labels(), train.num_classes(), true)?;
            rows.push(ResultRow::new(m.name(), report.mean_over(head_classes)));
        }
        Ok(rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> BenchmarkConfig {
        let mut cfg = BenchmarkConfig::desk_scale();
        cfg.num_classes = 3;
        cfg.n_max = 40;
        cfg.beta = 4.0;
        cfg.dim = 4;
        cfg.test_per_class = 10;
        cfg.arch = Architecture {
            trunk: vec![6],
            branch: vec![5],
        };
        cfg.train.epochs = 3;
        cfg.train.optimizer.warmup_epochs = 1;
        cfg.train.optimizer.milestones = vec![2];
        cfg.classifier.epochs = 2;
        cfg.classifier.optimizer.warmup_epochs = 1;
        cfg.classifier.optimizer.milestones = vec![];
        cfg.deferred_epoch = 2;
        cfg
    }

    #[test]
    fn desk_scale_is_valid() {
        let cfg = BenchmarkConfig::desk_scale();
        cfg.validate().unwrap();
        assert_eq!(cfg.counts().unwrap()[0], 500);
        assert_eq!(cfg.counts().unwrap()[9], 10);
        assert_eq!(cfg.deferred_epoch, 36);
    }

    #[test]
    fn tables_have_expected_rows() {
        let mut run = SeedRun::new(&tiny(), 3).unwrap();
        let names = |rows: &[ResultRow]| rows.iter().map(|r| r.method.clone()).collect::<Vec<_>>();
        assert_eq!(names(&run.method_table().unwrap()), ["CE", "RW", "RS", "CE-DRW", "CE-DRS", "BBN"]);
        assert_eq!(names(&run.sampler_ablation().unwrap()), ["Uniform", "Balanced", "Reversed"]);
        assert_eq!(run.adaptor_ablation().unwrap().len(), 6);
        assert_eq!(names(&run.feature_quality().unwrap()), ["CE", "RW", "RS", "BBN-CB", "BBN-RB"]);
        let e = run.ensembles().unwrap();
        assert_eq!(lookup(&e, "BBN"), lookup(&run.method_table().unwrap(), "BBN"));
        assert_eq!(run.norms().unwrap().reports.len(), 6);
        assert_eq!(run.compactness(2).unwrap().len(), 3);
    }

    #[test]
    fn seeds_are_reproducible() {
        let a = SeedRun::new(&tiny(), 8).unwrap().method_table().unwrap();
        let b = SeedRun::new(&tiny(), 8).unwrap().method_table().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_deferral_rejected() {
        let mut cfg = tiny();
        cfg.deferred_epoch = 10;
        assert!(cfg.validate().is_err());
    }
}
