use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strategy generating the branch trade-off `α` from training progress.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum AdaptorSchedule {
    /// α = 0.5
    EqualWeight,
    /// α ~ Beta(0.2, 0.2), one draw per epoch.
    BetaDist,
    /// α = (T/T_max)²
    ParabolicIncrement,
    /// α = 1 − T/T_max
    LinearDecay,
    /// α = cos(T/T_max · π/2)
    CosineDecay,
    /// α = 1 − (T/T_max)²
    ParabolicDecay,
    /// α pinned to a constant in [0, 1].
    Fixed(f64),
}

impl AdaptorSchedule {
    /// The six strategies of the adaptor ablation, in table order.
    pub const TABLE: [AdaptorSchedule; 6] = [
        AdaptorSchedule::EqualWeight,
        AdaptorSchedule::BetaDist,
        AdaptorSchedule::ParabolicIncrement,
        AdaptorSchedule::LinearDecay,
        AdaptorSchedule::CosineDecay,
        AdaptorSchedule::ParabolicDecay,
    ];

    /// Row label for result tables.
    pub fn label(&self) -> String {
        match self {
            AdaptorSchedule::EqualWeight => "Equal weight".into(),
            AdaptorSchedule::BetaDist => "β-distribution".into(),
            AdaptorSchedule::ParabolicIncrement => "Parabolic increment".into(),
            AdaptorSchedule::LinearDecay => "Linear decay".into(),
            AdaptorSchedule::CosineDecay => "Cosine decay".into(),
            AdaptorSchedule::ParabolicDecay => "Parabolic decay".into(),
            AdaptorSchedule::Fixed(a) => format!("Fixed {a}"),
        }
    }

    pub fn is_decay(&self) -> bool {
        matches!(
            self,
            AdaptorSchedule::LinearDecay | AdaptorSchedule::CosineDecay | AdaptorSchedule::ParabolicDecay
        )
    }

    /// α at epoch `t` of `t_max`. Only [`AdaptorSchedule::BetaDist`] touches
    /// `rng`.
    pub fn alpha<R: Rng + ?Sized>(&self, t: usize, t_max: usize, rng: &mut R) -> Result<f64> {
        if t_max == 0 {
            return Err(Error::Config("T_max must be at least 1".into()));
        }
        if t > t_max {
            return Err(Error::Config(format!("epoch {t} exceeds T_max {t_max}")));
        }
        let ratio = t as f64 / t_max as f64;
        let alpha = match *self {
            AdaptorSchedule::EqualWeight => 0.5,
            AdaptorSchedule::BetaDist => Beta::new(0.2, 0.2).expect("valid shape").sample(rng),
            AdaptorSchedule::ParabolicIncrement => ratio * ratio,
            AdaptorSchedule::LinearDecay => 1.0 - ratio,
            AdaptorSchedule::CosineDecay => (ratio * FRAC_PI_2).cos(),
            AdaptorSchedule::ParabolicDecay => 1.0 - ratio * ratio,
            AdaptorSchedule::Fixed(a) => a,
        };
        Ok(alpha.clamp(0.0, 1.0))
    }
}

/// Free-function form of [`AdaptorSchedule::alpha`].
pub fn alpha_at<R: Rng + ?Sized>(t: usize, t_max: usize, schedule: &AdaptorSchedule, rng: &mut R) -> Result<f64> {
    schedule.alpha(t, t_max, rng)
}

impl fmt::Display for AdaptorSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdaptorSchedule::EqualWeight => f.write_str("equal_weight"),
            AdaptorSchedule::BetaDist => f.write_str("beta_dist"),
            AdaptorSchedule::ParabolicIncrement => f.write_str("parabolic_increment"),
            AdaptorSchedule::LinearDecay => f.write_str("linear_decay"),
            AdaptorSchedule::CosineDecay => f.write_str("cosine_decay"),
            AdaptorSchedule::ParabolicDecay => f.write_str("parabolic_decay"),
            AdaptorSchedule::Fixed(a) => write!(f, "fixed:{a}"),
        }
    }
}

impl FromStr for AdaptorSchedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(v) = s.strip_prefix("fixed:") {
            let a: f64 = v
                .parse()
                .map_err(|_| Error::Config(format!("bad fixed alpha {v:?}")))?;
            if !(0.0..=1.0).contains(&a) {
                return Err(Error::Config(format!("fixed alpha {a} outside [0, 1]")));
            }
            return Ok(AdaptorSchedule::Fixed(a));
        }
        Ok(match s {
            "equal_weight" => AdaptorSchedule::EqualWeight,
            "beta_dist" => AdaptorSchedule::BetaDist,
            "parabolic_increment" => AdaptorSchedule::ParabolicIncrement,
            "linear_decay" => AdaptorSchedule::LinearDecay,
            "cosine_decay" => AdaptorSchedule::CosineDecay,
            "parabolic_decay" => AdaptorSchedule::ParabolicDecay,
            other => return Err(Error::Config(format!("unknown adaptor schedule {other:?}"))),
        })
    }
}

impl TryFrom<String> for AdaptorSchedule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<AdaptorSchedule> for String {
    fn from(s: AdaptorSchedule) -> String {
        s.to_string()
    }
}
