//! Binary checkpoints.
//!
//! Layout (little-endian): `"SPNN"`, `u32` version, `u8` kind, payload,
//! `u64` step. Kind 0 stores a trained model: `u32` d, rank, m; `d` pairs
//! of `f64` bounds; per axis network `u32` depth, width, out_dim, `u8`
//! variant, `u64` seed; `u64` parameter count and the `f64` parameters;
//! `u8` Adam flag followed, when set, by `u64` t and the `f64` moments.
//! Kind 1 stores the exact solution of a problem by name (`u32` length and
//! UTF-8 bytes).

use std::path::Path;

use spinn::nets::{BodyNet, MlpConfig, Variant};
use spinn::pde::ProblemId;
use spinn::separable::{FeatureSource, SeparableModel};
use spinn::trainer::AdamState;
use thiserror::Error;

use crate::error::CliError;

pub const MAGIC: &[u8; 4] = b"SPNN";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (bad magic bytes)")]
    Magic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("truncated checkpoint")]
    Truncated,
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

#[derive(Debug, Clone)]
pub enum Stored {
    Neural {
        model: SeparableModel,
        adam: Option<AdamState>,
    },
    Exact(ProblemId),
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub stored: Stored,
    pub step: u64,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Vec::new();
        w.extend_from_slice(MAGIC);
        put_u32(&mut w, VERSION);
        match &self.stored {
            Stored::Neural { model, adam } => {
                w.push(0);
                put_u32(&mut w, model.dim() as u32);
                put_u32(&mut w, model.rank() as u32);
                put_u32(&mut w, model.out_dim() as u32);
                for &(lo, hi) in model.bounds() {
                    put_f64(&mut w, lo);
                    put_f64(&mut w, hi);
                }
                for net in model.nets() {
                    let c = net.config();
                    put_u32(&mut w, c.depth as u32);
                    put_u32(&mut w, c.width as u32);
                    put_u32(&mut w, c.out_dim as u32);
                    w.push(match c.variant {
                        Variant::Plain => 0,
                        Variant::Modified => 1,
                    });
                    put_u64(&mut w, c.seed);
                }
                put_f64s(&mut w, &model.params_flat());
                match adam {
                    Some(a) => {
                        w.push(1);
                        put_u64(&mut w, a.t);
                        put_f64s(&mut w, &a.m);
                        put_f64s(&mut w, &a.v);
                    }
                    None => w.push(0),
                }
            }
            Stored::Exact(id) => {
                w.push(1);
                let name = id.name().as_bytes();
                put_u32(&mut w, name.len() as u32);
                w.extend_from_slice(name);
            }
        }
        put_u64(&mut w, self.step);
        w
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(4)? != MAGIC {
            return Err(CheckpointError::Magic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let stored = match r.u8()? {
            0 => {
                let d = r.u32()? as usize;
                let rank = r.u32()? as usize;
                let m = r.u32()? as usize;
                let bounds = (0..d).map(|_| Ok((r.f64()?, r.f64()?))).collect::<Result<Vec<_>, CheckpointError>>()?;
                let mut nets = Vec::with_capacity(d);
                for _ in 0..d {
                    let depth = r.u32()? as usize;
                    let width = r.u32()? as usize;
                    let out_dim = r.u32()? as usize;
                    let variant = match r.u8()? {
                        0 => Variant::Plain,
                        1 => Variant::Modified,
                        v => return Err(CheckpointError::Corrupt(format!("variant tag {v}"))),
                    };
                    let seed = r.u64()?;
                    let config = MlpConfig {
                        depth,
                        width,
                        out_dim,
                        variant,
                        seed,
                    };
                    nets.push(BodyNet::zeros(config).map_err(corrupt)?);
                }
                let mut model = SeparableModel::new(nets, rank, m, bounds).map_err(corrupt)?;
                let params = r.f64s()?;
                model.set_params_flat(&params).map_err(corrupt)?;
                let adam = match r.u8()? {
                    0 => None,
                    1 => {
                        let t = r.u64()?;
                        let (m1, v1) = (r.f64s()?, r.f64s()?);
                        if m1.len() != params.len() || v1.len() != params.len() {
                            return Err(CheckpointError::Corrupt("optimizer state length".into()));
                        }
                        Some(AdamState { m: m1, v: v1, t })
                    }
                    v => return Err(CheckpointError::Corrupt(format!("optimizer flag {v}"))),
                };
                Stored::Neural { model, adam }
            }
            1 => {
                let len = r.u32()? as usize;
                let name = std::str::from_utf8(r.take(len)?).map_err(corrupt)?;
                Stored::Exact(name.parse().map_err(corrupt)?)
            }
            k => return Err(CheckpointError::Corrupt(format!("kind {k}"))),
        };
        let step = r.u64()?;
        if r.at != bytes.len() {
            return Err(CheckpointError::Corrupt("trailing bytes".into()));
        }
        Ok(Self { stored, step })
    }

    pub fn save(&self, path: &Path) -> Result<(), CliError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|source| CliError::Checkpoint {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn corrupt(e: impl std::fmt::Display) -> CheckpointError {
    CheckpointError::Corrupt(e.to_string())
}

fn put_u32(w: &mut Vec<u8>, v: u32) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(w: &mut Vec<u8>, v: u64) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_f64(w: &mut Vec<u8>, v: f64) {
    w.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(w: &mut Vec<u8>, vs: &[f64]) {
    put_u64(w, vs.len() as u64);
    for &v in vs {
        put_f64(w, v);
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(CheckpointError::Truncated)?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.u64()? as usize;
        if n > (self.bytes.len() - self.at) / 8 {
            return Err(CheckpointError::Truncated);
        }
        (0..n).map(|_| self.f64()).collect()
    }
}
