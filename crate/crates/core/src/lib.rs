//! Long-tailed classification laboratory.
//!
//! A small deterministic dense-network engine ([`nn`]), synthetic long-tailed
//! datasets ([`data`]), the uniform/balanced/reversed samplers
//! ([`sampling`]), the CE/RW/RS training manners and two-stage baselines
//! ([`baselines`]), the bilateral-branch network with cumulative learning
//! ([`bbn`]), and the diagnostic instruments ([`analysis`]).
//!
//! Everything is `f64` and seeded; identical inputs give bit-identical
//! results.

pub mod analysis;
pub mod arch;
pub mod baselines;
pub mod bbn;
pub mod data;
pub mod error;
pub mod experiment;
pub mod metrics;
pub mod nn;
pub mod sampling;
pub mod tensor;

pub use arch::Architecture;
pub use error::{Error, Result};
pub use metrics::{derive_seed, EpochMetrics, EpochObserver};
pub use tensor::Tensor;
