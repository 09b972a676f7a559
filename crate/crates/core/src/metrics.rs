use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One row of a training history. `alpha` is only present for bilateral
/// training; `test_error` only when a held-out set was supplied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub alpha: Option<f64>,
    pub lr: f64,
    pub train_loss: f64,
    pub test_error: Option<f64>,
}

/// SplitMix64 finalizer, used to derive independent stream seeds from one
/// run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Called after every completed epoch; an error aborts training.
pub type EpochObserver<'a> = dyn FnMut(&EpochMetrics) -> Result<()> + 'a;

/// No-op observer.
pub fn ignore_epochs(_: &EpochMetrics) -> Result<()> {
    Ok(())
}

/// One JSON object per line, newline-terminated.
pub fn to_json_line(row: &EpochMetrics) -> Result<String> {
    let mut line = serde_json::to_string(row).map_err(|e| Error::Data(format!("metrics serialization: {e}")))?;
    line.push('\n');
    Ok(line)
}

pub fn to_jsonl(rows: &[EpochMetrics]) -> Result<String> {
    rows.iter().map(to_json_line).collect()
}

pub fn from_jsonl(text: &str) -> Result<Vec<EpochMetrics>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::Data(format!("metrics line {}: {e}", i + 1))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_round_trip() {
        let rows = vec![
            EpochMetrics {
                epoch: 0,
                alpha: Some(0.75),
                lr: 0.1,
                train_loss: 2.3,
                test_error: None,
            },
            EpochMetrics {
                epoch: 1,
                alpha: None,
                lr: 1e-3,
                train_loss: 0.1 + 0.2,
                test_error: Some(0.125),
            },
        ];
        let text = to_jsonl(&rows).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(from_jsonl(&text).unwrap(), rows);
        assert!(from_jsonl("{\"epoch\": 0}").is_err());
    }

    #[test]
    fn seeds_differ_by_stream() {
        assert_ne!(derive_seed(1, 1), derive_seed(1, 2));
        assert_ne!(derive_seed(1, 1), derive_seed(2, 1));
        assert_eq!(derive_seed(9, 4), derive_seed(9, 4));
    }
}
