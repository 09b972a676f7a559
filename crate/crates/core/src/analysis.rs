//! Diagnostics: classifier-norm profiles, intra-class compactness, feature
//! quality of each bilateral branch, and the two-model ensemble baseline.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::baselines::{error_rate, retrain_on_extractor, Manner, Retrained, TrainConfig};
use crate::bbn::{BbnModel, Branch};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{softmax, Network};
use crate::tensor::Tensor;

/// Which classifier a norm profile was taken from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NormSource {
    CE,
    RW,
    RS,
    BbnCb,
    BbnRb,
    BbnAll,
}

impl NormSource {
    pub fn label(self) -> &'static str {
        match self {
            NormSource::CE => "CE",
            NormSource::RW => "RW",
            NormSource::RS => "RS",
            NormSource::BbnCb => "BBN-CB",
            NormSource::BbnRb => "BBN-RB",
            NormSource::BbnAll => "BBN-ALL",
        }
    }
}

impl fmt::Display for NormSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormReport {
    pub per_class_norm: Vec<f64>,
    /// Population standard deviation of `per_class_norm`.
    pub sigma: f64,
    pub source: NormSource,
}

impl NormReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,norm\n");
        for (i, n) in self.per_class_norm.iter().enumerate() {
            out.push_str(&format!("{i},{n}\n"));
        }
        out
    }
}

/// Column norms of a `D × C` classifier matrix.
pub fn classifier_norms(w: &Tensor, source: NormSource) -> Result<NormReport> {
    if w.shape().len() != 2 {
        return Err(Error::dim("classifier_norms", format!("expected D x C, got {:?}", w.shape())));
    }
    let per_class_norm: Vec<f64> = (0..w.cols()).map(|j| w.column_norm(j)).collect();
    let sigma = population_std(&per_class_norm);
    Ok(NormReport {
        per_class_norm,
        sigma,
        source,
    })
}

pub fn population_std(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Ranks with ties sharing their average rank (1-based).
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompactnessReport {
    pub per_class_mean_distance: Vec<f64>,
    pub per_class_centroid: Vec<Vec<f64>>,
}

impl CompactnessReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,mean_distance\n");
        for (i, d) in self.per_class_mean_distance.iter().enumerate() {
            out.push_str(&format!("{i},{d}\n"));
        }
        out
    }

    /// Mean of the per-class distances over the given classes.
    pub fn mean_over(&self, classes: &[usize]) -> f64 {
        classes.iter().map(|&c| self.per_class_mean_distance[c]).sum::<f64>() / classes.len() as f64
    }
}

/// Mean Euclidean distance from each class's feature rows to their
/// centroid. With `normalize`, rows are first scaled to unit length (zero
/// rows stay zero).
pub fn compactness(features: &Tensor, labels: &[usize], num_classes: usize, normalize: bool) -> Result<CompactnessReport> {
    if features.rows() != labels.len() {
        return Err(Error::dim("compactness", format!("{} rows, {} labels", features.rows(), labels.len())));
    }
    let d = features.cols();
    let rows: Vec<Vec<f64>> = (0..features.rows())
        .map(|i| {
            let r = features.row(i);
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if normalize && norm > 0.0 {
                r.iter().map(|v| v / norm).collect()
            } else {
                r.to_vec()
            }
        })
        .collect();
    let mut centroids = vec![vec![0.0; d]; num_classes];
    let mut counts = vec![0usize; num_classes];
    for (row, &y) in rows.iter().zip(labels) {
        if y >= num_classes {
            return Err(Error::Data(format!("label {y} out of range for {num_classes} classes")));
        }
        counts[y] += 1;
        for (c, v) in centroids[y].iter_mut().zip(row) {
            *c += v;
        }
    }
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(Error::Data(format!("class {empty} has no feature rows")));
    }
    for (c, &n) in centroids.iter_mut().zip(&counts) {
        for v in c.iter_mut() {
            *v /= n as f64;
        }
    }
    let mut dist = vec![0.0; num_classes];
    for (row, &y) in rows.iter().zip(labels) {
        dist[y] += row.iter().zip(&centroids[y]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    }
    for (s, &n) in dist.iter_mut().zip(&counts) {
        *s /= n as f64;
    }
    Ok(CompactnessReport {
        per_class_mean_distance: dist,
        per_class_centroid: centroids,
    })
}

/// Classifier retrained on each bilateral branch's frozen representation.
#[derive(Debug, Clone)]
pub struct BranchQuality {
    pub conventional: Retrained,
    pub rebalancing: Retrained,
}

/// Freezes trunk + branch for each branch in turn and retrains a fresh
/// linear classifier with `manner`.
pub fn feature_quality_eval(
    model: &BbnModel,
    train: &Dataset,
    test: &Dataset,
    manner: Manner,
    config: &TrainConfig,
    seed: u64,
) -> Result<BranchQuality> {
    let conventional = retrain_on_extractor(&model.branch_extractor(Branch::Conventional), manner, train, test, config, seed)?;
    let rebalancing = retrain_on_extractor(&model.branch_extractor(Branch::Rebalancing), manner, train, test, config, seed)?;
    Ok(BranchQuality {
        conventional,
        rebalancing,
    })
}

/// Anything that maps a batch to per-class probabilities.
pub trait ProbabilisticClassifier {
    fn num_classes(&self) -> usize;
    fn probabilities(&self, x: &Tensor) -> Result<Tensor>;
}

impl ProbabilisticClassifier for Network {
    fn num_classes(&self) -> usize {
        self.out_dim().unwrap_or(0)
    }

    fn probabilities(&self, x: &Tensor) -> Result<Tensor> {
        Ok(softmax(&self.predict(x)?))
    }
}

impl ProbabilisticClassifier for BbnModel {
    fn num_classes(&self) -> usize {
        BbnModel::num_classes(self)
    }

    fn probabilities(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.infer(x)?.1)
    }
}

/// Averages the two models' class probabilities and predicts the argmax
/// (ties to the lowest class).
pub fn ensemble_predict<A, B>(a: &A, b: &B, x: &Tensor) -> Result<Vec<usize>>
where
    A: ProbabilisticClassifier + ?Sized,
    B: ProbabilisticClassifier + ?Sized,
{
    if a.num_classes() != b.num_classes() {
        return Err(Error::Config(format!(
            "ensemble members disagree on class count: {} vs {}",
            a.num_classes(),
            b.num_classes()
        )));
    }
    let mut p = a.probabilities(x)?;
    let q = b.probabilities(x)?;
    for (u, v) in p.values_mut().iter_mut().zip(q.values()) {
        *u = (*u + v) / 2.0;
    }
    Ok(p.argmax_rows())
}

pub fn ensemble_eval<A, B>(a: &A, b: &B, test: &Dataset) -> Result<f64>
where
    A: ProbabilisticClassifier + ?Sized,
    B: ProbabilisticClassifier + ?Sized,
{
    let pred = ensemble_predict(a, b, test.features())?;
    Ok(error_rate(&pred, test.labels()))
}
