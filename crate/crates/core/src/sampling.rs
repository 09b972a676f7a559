//! Mini-batch index samplers.
//!
//! * `Uniform` walks a seeded permutation of the dataset, so every index is
//!   emitted exactly once per epoch. The permutation for epoch `e` is drawn
//!   from `seed ^ e`.
//! * `Balanced` draws a class uniformly, then an index within it with
//!   replacement.
//! * `Reversed` draws a class with probability proportional to
//!   `N_max / N_i`, then an index within it with replacement.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SamplerKind {
    Uniform,
    Balanced,
    Reversed,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 3] = [SamplerKind::Uniform, SamplerKind::Balanced, SamplerKind::Reversed];

    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Uniform => "Uniform",
            SamplerKind::Balanced => "Balanced",
            SamplerKind::Reversed => "Reversed",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" => Ok(SamplerKind::Uniform),
            "balanced" => Ok(SamplerKind::Balanced),
            "reversed" => Ok(SamplerKind::Reversed),
            _ => Err(Error::Config(format!("unknown sampler {s:?}"))),
        }
    }
}

/// Reversed-sampler class weights `w_i = N_max / N_i` and probabilities
/// `P_i = w_i / Σ w_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
    pub probs: Vec<f64>,
}

pub fn reversed_probs(class_counts: &[usize]) -> Result<ClassWeights> {
    if class_counts.is_empty() {
        return Err(Error::Data("no classes".into()));
    }
    if let Some(i) = class_counts.iter().position(|&n| n == 0) {
        return Err(Error::Data(format!("class {i} has zero samples")));
    }
    let n_max = *class_counts.iter().max().unwrap() as f64;
    let weights: Vec<f64> = class_counts.iter().map(|&n| n_max / n as f64).collect();
    let total: f64 = weights.iter().sum();
    let probs = weights.iter().map(|w| w / total).collect();
    Ok(ClassWeights { weights, probs })
}

/// Inverse-CDF draw from a cumulative table whose last entry is 1.
fn draw_categorical<R: Rng + ?Sized>(cumulative: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

#[derive(Debug, Clone)]
pub struct Sampler {
    kind: SamplerKind,
    seed: u64,
    rng: ChaCha8Rng,
    class_indices: Vec<Vec<usize>>,
    cumulative: Vec<f64>,
    permutation: Vec<usize>,
    cursor: usize,
    epoch: u64,
}

impl Sampler {
    pub fn new(kind: SamplerKind, labels: &[usize], num_classes: usize, seed: u64) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Data("cannot sample from an empty dataset".into()));
        }
        let mut class_indices = vec![Vec::new(); num_classes];
        for (i, &y) in labels.iter().enumerate() {
            class_indices
                .get_mut(y)
                .ok_or_else(|| Error::Data(format!("label {y} out of range for {num_classes} classes")))?
                .push(i);
        }
        let cumulative = match kind {
            SamplerKind::Reversed => {
                let counts: Vec<usize> = class_indices.iter().map(Vec::len).collect();
                let mut acc = 0.0;
                let mut cum: Vec<f64> = reversed_probs(&counts)?
                    .probs
                    .iter()
                    .map(|p| {
                        acc += p;
                        acc
                    })
                    .collect();
                *cum.last_mut().unwrap() = 1.0;
                cum
            }
            SamplerKind::Balanced => {
                if let Some(i) = class_indices.iter().position(Vec::is_empty) {
                    return Err(Error::Data(format!("class {i} has zero samples")));
                }
                Vec::new()
            }
            SamplerKind::Uniform => Vec::new(),
        };
        let mut sampler = Self {
            kind,
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
            class_indices,
            cumulative,
            permutation: (0..labels.len()).collect(),
            cursor: 0,
            epoch: 0,
        };
        if kind == SamplerKind::Uniform {
            sampler.shuffle_epoch();
        }
        Ok(sampler)
    }

    pub fn kind(&self) -> SamplerKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    /// `ceil(N / batch_size)`: epoch length shared by all sampler kinds.
    pub fn steps_per_epoch(&self, batch_size: usize) -> usize {
        self.len().div_ceil(batch_size.max(1))
    }

    pub fn class_indices(&self) -> &[Vec<usize>] {
        &self.class_indices
    }

    fn shuffle_epoch(&mut self) {
        self.permutation.sort_unstable();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ self.epoch);
        self.permutation.shuffle(&mut rng);
        self.cursor = 0;
    }

    pub fn next_batch(&mut self, batch_size: usize) -> Vec<usize> {
        match self.kind {
            SamplerKind::Uniform => self.uniform(batch_size),
            SamplerKind::Balanced => self.balanced(batch_size),
            SamplerKind::Reversed => self.reversed(batch_size),
        }
    }

    pub fn next_batch_uniform(&mut self, batch_size: usize) -> Result<Vec<usize>> {
        self.expect(SamplerKind::Uniform)?;
        Ok(self.uniform(batch_size))
    }

    pub fn next_batch_balanced(&mut self, batch_size: usize) -> Result<Vec<usize>> {
        self.expect(SamplerKind::Balanced)?;
        Ok(self.balanced(batch_size))
    }

    pub fn next_batch_reversed(&mut self, batch_size: usize) -> Result<Vec<usize>> {
        self.expect(SamplerKind::Reversed)?;
        Ok(self.reversed(batch_size))
    }

    fn expect(&self, kind: SamplerKind) -> Result<()> {
        if self.kind != kind {
            return Err(Error::State(format!("{} sampler asked for a {} batch", self.kind, kind)));
        }
        Ok(())
    }

    // Batches never straddle an epoch boundary; the last one may be short.
    fn uniform(&mut self, batch_size: usize) -> Vec<usize> {
        if self.cursor >= self.permutation.len() {
            self.epoch += 1;
            self.shuffle_epoch();
        }
        let end = (self.cursor + batch_size).min(self.permutation.len());
        let batch = self.permutation[self.cursor..end].to_vec();
        self.cursor = end;
        batch
    }

    fn within(&mut self, class: usize) -> usize {
        let members = &self.class_indices[class];
        members[self.rng.random_range(0..members.len())]
    }

    fn balanced(&mut self, batch_size: usize) -> Vec<usize> {
        let c = self.class_indices.len();
        (0..batch_size)
            .map(|_| {
                let class = self.rng.random_range(0..c);
                self.within(class)
            })
            .collect()
    }

    fn reversed(&mut self, batch_size: usize) -> Vec<usize> {
        (0..batch_size)
            .map(|_| {
                let class = draw_categorical(&self.cumulative, &mut self.rng);
                self.within(class)
            })
            .collect()
    }
}
