//! `PVOL` binary volume files.
//!
//! Layout: magic `PVOL`, version `u8 = 1`, dtype `u8` (1 = f64, 2 = u8 labels),
//! dims `W, H, D, C` as little-endian `u32`, for labels a `u32` class count,
//! then the raw elements in linear layout (little-endian for f64).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::volume::{Dims, LabelVolume, Volume};

pub const MAGIC: &[u8; 4] = b"PVOL";
pub const VERSION: u8 = 1;
const DTYPE_F64: u8 = 1;
const DTYPE_LABELS: u8 = 2;
const HEADER_LEN: usize = 4 + 1 + 1 + 16;

pub fn encode_volume(v: &Volume) -> Vec<u8> {
    let d = v.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * d.len());
    write_header(&mut out, DTYPE_F64, d);
    for x in v.data() {
        out.extend_from_slice(&x.to_le_bytes());
    }
    out
}

pub fn encode_labels(l: &LabelVolume) -> Vec<u8> {
    let [w, h, d] = l.spatial();
    let mut out = Vec::with_capacity(HEADER_LEN + 4 + l.labels().len());
    write_header(&mut out, DTYPE_LABELS, Dims::new(w, h, d, 1));
    out.extend_from_slice(&(l.num_classes() as u32).to_le_bytes());
    out.extend_from_slice(l.labels());
    out
}

pub fn decode_volume(bytes: &[u8]) -> Result<Volume> {
    let (dtype, dims) = read_header(bytes)?;
    if dtype != DTYPE_F64 {
        return Err(Error::format("dtype", format!("expected 1 (f64), found {dtype}")));
    }
    let body = &bytes[HEADER_LEN..];
    let expected = dims.len() * 8;
    if body.len() != expected {
        return Err(Error::format(
            "data length",
            format!("expected {expected} bytes for {dims}, found {}", body.len()),
        ));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Volume::from_vec(dims, data)
}

pub fn decode_labels(bytes: &[u8]) -> Result<LabelVolume> {
    let (dtype, dims) = read_header(bytes)?;
    if dtype != DTYPE_LABELS {
        return Err(Error::format("dtype", format!("expected 2 (labels), found {dtype}")));
    }
    if dims.channels != 1 {
        return Err(Error::format(
            "channels",
            format!("label volumes have one channel, found {}", dims.channels),
        ));
    }
    let rest = &bytes[HEADER_LEN..];
    if rest.len() < 4 {
        return Err(Error::format("num_classes", "file ends before class count"));
    }
    let num_classes = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
    if num_classes == 0 {
        return Err(Error::format("num_classes", "must be >= 1"));
    }
    let body = &rest[4..];
    if body.len() != dims.voxels() {
        return Err(Error::format(
            "data length",
            format!("expected {} bytes for {dims}, found {}", dims.voxels(), body.len()),
        ));
    }
    LabelVolume::new(dims.spatial(), num_classes, body.to_vec())
        .map_err(|e| Error::format("labels", e.to_string()))
}

pub fn write_vol(path: impl AsRef<Path>, v: &Volume) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_volume(v)).map_err(|e| Error::io(path, e))
}

pub fn read_vol(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    decode_volume(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

pub fn write_labels(path: impl AsRef<Path>, l: &LabelVolume) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_labels(l)).map_err(|e| Error::io(path, e))
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVolume> {
    let path = path.as_ref();
    decode_labels(&fs::read(path).map_err(|e| Error::io(path, e))?)
}

fn write_header(out: &mut Vec<u8>, dtype: u8, d: Dims) {
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(dtype);
    for n in [d.width, d.height, d.depth, d.channels] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
}

fn read_header(bytes: &[u8]) -> Result<(u8, Dims)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(
            "header",
            format!("file is {} bytes, header needs {HEADER_LEN}", bytes.len()),
        ));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::format("magic", format!("expected PVOL, found {:?}", &bytes[..4])));
    }
    if bytes[4] != VERSION {
        return Err(Error::format("version", format!("unsupported version {}", bytes[4])));
    }
    let dtype = bytes[5];
    let dim = |i: usize| u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().unwrap()) as usize;
    let dims = Dims::new(dim(0), dim(1), dim(2), dim(3));
    for (name, n) in [
        ("width", dims.width),
        ("height", dims.height),
        ("depth", dims.depth),
        ("channels", dims.channels),
    ] {
        if n == 0 {
            return Err(Error::Format {
                field: name,
                message: "dimension is zero".into(),
            });
        }
    }
    Ok((dtype, dims))
}
