//! `PNET` training checkpoints.
//!
//! Layout (little-endian): magic `PNET`, version `u8`, architecture
//! (input channels `u32`, filter `u32`, layer count `u32`, then per layer a
//! kind byte, a width `u32` and an activation byte), parameter count `u64`,
//! parameters as f64, optimizer mean squares and momenta as f64, completed
//! epochs `u64`, seed `u64`.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::network::{Activation, Architecture, LayerSpec, Network};
use crate::train::{OptimizerState, TrainState};

pub const MAGIC: &[u8; 4] = b"PNET";
pub const VERSION: u8 = 1;

const KIND_PYRAMID: u8 = 0;
const KIND_FC: u8 = 1;
const ACT_NONE: u8 = 0;
const ACT_TANH: u8 = 1;
const ACT_SOFTMAX: u8 = 2;

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

pub fn encode(state: &TrainState) -> Vec<u8> {
    let arch = state.net.architecture();
    let n = state.net.param_count();
    let mut out = Vec::with_capacity(64 + 24 * n);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    put_u32(&mut out, arch.input_channels);
    put_u32(&mut out, arch.filter);
    put_u32(&mut out, arch.layers.len());
    for l in &arch.layers {
        let (kind, width, act) = match *l {
            LayerSpec::Pyramid { hidden } => (KIND_PYRAMID, hidden, ACT_NONE),
            LayerSpec::Fc { units, activation } => (
                KIND_FC,
                units,
                match activation {
                    Activation::Tanh => ACT_TANH,
                    Activation::Softmax => ACT_SOFTMAX,
                },
            ),
        };
        out.push(kind);
        put_u32(&mut out, width);
        out.push(act);
    }
    out.extend_from_slice(&(n as u64).to_le_bytes());
    put_f64s(&mut out, &state.net.to_flat());
    put_f64s(&mut out, &state.opt.mse);
    put_f64s(&mut out, &state.opt.momentum);
    out.extend_from_slice(&state.epoch.to_le_bytes());
    out.extend_from_slice(&state.seed.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &'static str) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(field, "file truncated"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, field: &'static str) -> Result<u8> {
        Ok(self.take(1, field)?[0])
    }

    fn u32(&mut self, field: &'static str) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4, field)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self, field: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, field)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize, field: &'static str) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::format(field, "too large"))?, field)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<TrainState> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format("magic", "not a PNET checkpoint"));
    }
    let version = r.u8("version")?;
    if version != VERSION {
        return Err(Error::format("version", format!("unsupported version {version}")));
    }
    let input_channels = r.u32("architecture")?;
    let filter = r.u32("architecture")?;
    let count = r.u32("architecture")?;
    let mut layers = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let kind = r.u8("architecture")?;
        let width = r.u32("architecture")?;
        let act = r.u8("architecture")?;
        layers.push(match (kind, act) {
            (KIND_PYRAMID, ACT_NONE) => LayerSpec::Pyramid { hidden: width },
            (KIND_FC, ACT_TANH) => LayerSpec::Fc {
                units: width,
                activation: Activation::Tanh,
            },
            (KIND_FC, ACT_SOFTMAX) => LayerSpec::Fc {
                units: width,
                activation: Activation::Softmax,
            },
            _ => return Err(Error::format("architecture", format!("unknown layer kind {kind}/{act}"))),
        });
    }
    let arch = Architecture {
        input_channels,
        filter,
        layers,
    };
    arch.validate_layers()
        .map_err(|e| Error::format("architecture", e.to_string()))?;
    let n = r.u64("param count")? as usize;
    if n != arch.param_count() {
        return Err(Error::format(
            "param count",
            format!("{n} stored, architecture needs {}", arch.param_count()),
        ));
    }
    let mut net = Network::zeros(&arch)?;
    net.set_flat(&r.f64s(n, "parameters")?)?;
    let mse = r.f64s(n, "optimizer")?;
    let momentum = r.f64s(n, "optimizer")?;
    let epoch = r.u64("epoch")?;
    let seed = r.u64("seed")?;
    if r.pos != bytes.len() {
        return Err(Error::format("trailing bytes", format!("{} unexpected bytes", bytes.len() - r.pos)));
    }
    Ok(TrainState {
        net,
        opt: OptimizerState { mse, momentum },
        epoch,
        seed,
    })
}

pub fn save(path: impl AsRef<Path>, state: &TrainState) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode(state)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<TrainState> {
    let path = path.as_ref();
    decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
