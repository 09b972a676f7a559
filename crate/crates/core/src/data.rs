//! Synthetic long-tailed datasets.
//!
//! Per-class counts follow an exponential profile from `n_max` down to
//! `n_max / beta`; samples are isotropic Gaussians around per-class means.
//! Datasets serialize to a small little-endian binary format:
//!
//! ```text
//! "LTDS" | version: u32 = 1 | N: u64 | d: u64 | C: u64
//! N·d features as f64 (row-major) | N labels as u32
//! ```

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DATASET_MAGIC: &[u8; 4] = b"LTDS";
pub const DATASET_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 * 3;

/// Offset mixed into the seed of held-out splits so they never share a
/// stream with the training split.
const TEST_SEED_OFFSET: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImbalanceProfile {
    pub num_classes: usize,
    pub n_max: usize,
    /// `N_max / N_min`.
    pub beta: f64,
}

/// `N_i = round(n_max · beta^(−i/(C−1)))`, rounding half up, at least 1.
pub fn make_counts(profile: &ImbalanceProfile) -> Result<Vec<usize>> {
    let ImbalanceProfile {
        num_classes: c,
        n_max,
        beta,
    } = *profile;
    if !(beta >= 1.0 && beta.is_finite()) {
        return Err(Error::Config(format!("imbalance factor must be >= 1, got {beta}")));
    }
    if c < 2 {
        return Err(Error::Config(format!("need at least 2 classes, got {c}")));
    }
    if n_max == 0 {
        return Err(Error::Config("n_max must be positive".into()));
    }
    let counts = (0..c)
        .map(|i| {
            if i == 0 {
                return n_max;
            }
            let exact = n_max as f64 * beta.powf(-(i as f64) / (c - 1) as f64);
            ((exact + 0.5).floor() as usize).max(1)
        })
        .collect();
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Tensor,
    labels: Vec<usize>,
    class_counts: Vec<usize>,
}

impl Dataset {
    /// Checks labels against `num_classes` and that every class is present.
    pub fn new(features: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.shape().len() != 2 {
            return Err(Error::dim("Dataset", format!("features must be N x d, got {:?}", features.shape())));
        }
        if features.rows() != labels.len() {
            return Err(Error::dim(
                "Dataset",
                format!("{} feature rows, {} labels", features.rows(), labels.len()),
            ));
        }
        let mut class_counts = vec![0usize; num_classes];
        for &y in &labels {
            if y >= num_classes {
                return Err(Error::Data(format!("label {y} out of range for {num_classes} classes")));
            }
            class_counts[y] += 1;
        }
        if let Some(empty) = class_counts.iter().position(|&n| n == 0) {
            return Err(Error::Data(format!("class {empty} has no samples")));
        }
        Ok(Self {
            features,
            labels,
            class_counts,
        })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.class_counts.len()
    }

    /// Features and labels of the given rows, in order.
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let x = self.features.gather_rows(indices);
        let y = indices.iter().map(|&i| self.labels[i]).collect();
        (x, y)
    }

    /// Same labels, new feature matrix (e.g. representations from a frozen
    /// network).
    pub fn with_features(&self, features: Tensor) -> Result<Self> {
        Self::new(features, self.labels.clone(), self.num_classes())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (n, d, c) = (self.len(), self.dim(), self.num_classes());
        let mut out = Vec::with_capacity(HEADER_LEN + n * d * 8 + n * 4);
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        for v in [n, d, c] {
            out.extend_from_slice(&(v as u64).to_le_bytes());
        }
        for v in self.features.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for &y in &self.labels {
            out.extend_from_slice(&(y as u32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        let magic = r.take(4)?;
        if magic != DATASET_MAGIC {
            return Err(Error::parse(0, format!("bad magic {magic:?}, expected \"LTDS\"")));
        }
        let version = r.u32()?;
        if version != DATASET_VERSION {
            return Err(Error::parse(4, format!("unsupported version {version}")));
        }
        let n = r.u64()?;
        let d = r.u64()?;
        let c = r.u64()?;
        if n == 0 || d == 0 || c == 0 {
            return Err(Error::parse(8, format!("empty dimension: N={n}, d={d}, C={c}")));
        }
        let payload = n
            .checked_mul(d)
            .and_then(|nd| nd.checked_mul(8))
            .and_then(|f| n.checked_mul(4).and_then(|l| f.checked_add(l)))
            .and_then(|p| p.checked_add(HEADER_LEN as u64))
            .ok_or_else(|| Error::parse(8, "header sizes overflow"))?;
        if (bytes.len() as u64) < payload {
            return Err(Error::parse(
                bytes.len() as u64,
                format!("truncated payload: expected {payload} bytes, file has {}", bytes.len()),
            ));
        }
        if (bytes.len() as u64) > payload {
            return Err(Error::parse(payload, format!("{} trailing bytes", bytes.len() as u64 - payload)));
        }
        let (n, d, c) = (n as usize, d as usize, c as usize);
        let mut values = Vec::with_capacity(n * d);
        for _ in 0..n * d {
            let at = r.offset();
            let v = r.f64()?;
            if !v.is_finite() {
                return Err(Error::parse(at, format!("non-finite feature {v}")));
            }
            values.push(v);
        }
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let at = r.offset();
            let y = r.u32()? as usize;
            if y >= c {
                return Err(Error::parse(at, format!("label {y} out of range for {c} classes")));
            }
            labels.push(y);
        }
        let features = Tensor::new(vec![n, d], values)?;
        Self::new(features, labels, c)
    }
}

pub fn save_dataset(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ds.to_bytes())?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    Dataset::from_bytes(&fs::read(path)?)
}

/// Little-endian cursor that reports the byte offset of any short read.
pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::parse(
                self.bytes.len() as u64,
                format!("unexpected end of file: needed {n} bytes at offset {}", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Class-conditional isotropic Gaussians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub class_means: Vec<Vec<f64>>,
    pub noise_scale: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn new(class_means: Vec<Vec<f64>>, noise_scale: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            class_means,
            noise_scale,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Means drawn as `separation · N(0, I_d)` from `means_seed`.
    pub fn random_means(
        num_classes: usize,
        dim: usize,
        separation: f64,
        noise_scale: f64,
        means_seed: u64,
        sample_seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(means_seed);
        let means = (0..num_classes)
            .map(|_| {
                (0..dim)
                    .map(|_| separation * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        Self::new(means, noise_scale, sample_seed)
    }

    /// Means confined to a random `rank`-dimensional subspace of `R^dim`:
    /// `separation · Q z` with `Q` an orthonormal `dim × rank` basis and
    /// `z ~ N(0, I_rank)` per class. Noise still fills every dimension.
    pub fn subspace_means(
        num_classes: usize,
        dim: usize,
        rank: usize,
        separation: f64,
        noise_scale: f64,
        means_seed: u64,
        sample_seed: u64,
    ) -> Result<Self> {
        if rank == 0 || rank > dim {
            return Err(Error::Config(format!("subspace rank {rank} must lie in 1..={dim}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(means_seed);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rank);
        while basis.len() < rank {
            let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            for q in &basis {
                let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
            }
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            if norm > 1e-8 {
                basis.push(v.into_iter().map(|a| a / norm).collect());
            }
        }
        let means = (0..num_classes)
            .map(|_| {
                let z: Vec<f64> = (0..rank).map(|_| separation * rng.sample::<f64, _>(StandardNormal)).collect();
                (0..dim).map(|j| basis.iter().zip(&z).map(|(q, zk)| q[j] * zk).sum()).collect()
            })
            .collect();
        Self::new(means, noise_scale, sample_seed)
    }

    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.class_means.first() else {
            return Err(Error::Config("no class means".into()));
        };
        let d = first.len();
        if d == 0 || self.class_means.iter().any(|m| m.len() != d) {
            return Err(Error::Config("class means must share one positive dimension".into()));
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            return Err(Error::Config(format!("noise_scale must be >= 0, got {}", self.noise_scale)));
        }
        for i in 0..self.class_means.len() {
            for j in i + 1..self.class_means.len() {
                if self.class_means[i] == self.class_means[j] {
                    return Err(Error::Config(format!("class means {i} and {j} coincide")));
                }
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.class_means.len()
    }

    pub fn dim(&self) -> usize {
        self.class_means[0].len()
    }

    fn sample(&self, counts: &[usize], seed: u64) -> Result<Dataset> {
        self.validate()?;
        if counts.len() != self.num_classes() {
            return Err(Error::Config(format!(
                "{} counts for {} class means",
                counts.len(),
                self.num_classes()
            )));
        }
        let d = self.dim();
        let n: usize = counts.iter().sum();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = Vec::with_capacity(n * d);
        let mut labels = Vec::with_capacity(n);
        for (class, (&count, mean)) in counts.iter().zip(&self.class_means).enumerate() {
            for _ in 0..count {
                for &m in mean {
                    let z: f64 = rng.sample(StandardNormal);
                    values.push(m + self.noise_scale * z);
                }
                labels.push(class);
            }
        }
        Dataset::new(Tensor::new(vec![n, d], values)?, labels, self.num_classes())
    }
}

/// `counts[i]` draws around `class_means[i]`, class-major order.
pub fn synth_dataset(spec: &SyntheticSpec, counts: &[usize]) -> Result<Dataset> {
    spec.sample(counts, spec.seed)
}

/// Balanced held-out split from a seed disjoint from the training stream.
pub fn make_balanced_test(spec: &SyntheticSpec, per_class: usize) -> Result<Dataset> {
    if per_class == 0 {
        return Err(Error::Config("per_class must be positive".into()));
    }
    let counts = vec![per_class; spec.num_classes()];
    spec.sample(&counts, spec.seed ^ TEST_SEED_OFFSET)
}
