//! Model checkpoints.
//!
//! ```text
//! "BBNM" | version: u32 = 1
//! input: u64 | classes: u64
//! n_trunk: u64 | trunk widths: n_trunk × u64
//! n_branch: u64 | branch widths: n_branch × u64
//! parameter values as f64, in declaration order:
//!   trunk (W, b per layer), branch_c, branch_r, W_c, W_r
//! ```

use std::fs;
use std::path::Path;

use super::BbnModel;
use crate::arch::Architecture;
use crate::data::ByteReader;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BBNM";
pub const CHECKPOINT_VERSION: u32 = 1;

// Guards against absurd headers before allocating.
const MAX_LAYERS: u64 = 1024;

impl BbnModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let arch = self.arch();
        let mut header = vec![self.input_dim() as u64, self.num_classes() as u64, arch.trunk.len() as u64];
        header.extend(arch.trunk.iter().map(|&w| w as u64));
        header.push(arch.branch.len() as u64);
        header.extend(arch.branch.iter().map(|&w| w as u64));
        for v in header {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for p in self.params() {
            for v in p.value.values() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::parse(0, "bad magic, expected \"BBNM\""));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::parse(4, format!("unsupported checkpoint version {version}")));
        }
        let input = r.u64()? as usize;
        let classes = r.u64()? as usize;
        let widths = |r: &mut ByteReader| -> Result<Vec<usize>> {
            let at = r.offset();
            let n = r.u64()?;
            if n > MAX_LAYERS {
                return Err(Error::parse(at, format!("implausible layer count {n}")));
            }
            (0..n).map(|_| r.u64().map(|w| w as usize)).collect()
        };
        let trunk = widths(&mut r)?;
        let branch = widths(&mut r)?;
        let arch = Architecture { trunk, branch };
        if input == 0 || classes == 0 {
            return Err(Error::parse(8, "zero input width or class count"));
        }
        let header_end = r.offset();
        let mut model = BbnModel::new(&arch, input, classes, 0).map_err(|e| Error::parse(header_end, e.to_string()))?;
        let expected: usize = model.params().iter().map(|p| p.value.len() * 8).sum();
        if r.remaining() != expected {
            return Err(Error::parse(
                bytes.len() as u64,
                format!("expected {expected} parameter bytes after header, found {}", r.remaining()),
            ));
        }
        for p in model.params_mut() {
            for v in p.value.values_mut() {
                *v = r.f64()?;
            }
        }
        Ok(model)
    }
}

pub fn save_model(model: &BbnModel, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model.to_bytes())?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<BbnModel> {
    BbnModel::from_bytes(&fs::read(path)?)
}
