//! Checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes   "PRECKPT\0"
//! version    u32       1
//! meta_len   u32
//! meta       meta_len bytes of UTF-8 JSON (model config plus caller metadata)
//! count      u32       number of tensors
//! repeated count times:
//!   name_len u16, name (UTF-8)
//!   group    u8        0 = embedding, 1 = dense
//!   ndim     u8, dims  ndim × u32
//!   values   prod(dims) × f64
//! ```
//!
//! Values are always stored as `f64`; 32-bit models widen on save and narrow
//! on load, which round-trips exactly.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::state::EncoderState;
use crate::error::{Error, Result};
use crate::numerics::{ParamGroup, Real, Tensor};

const MAGIC: &[u8; 8] = b"PRECKPT\0";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    model: ModelConfig,
    extra: serde_json::Value,
}

pub fn write_checkpoint<T: Real>(
    mut out: impl Write,
    state: &EncoderState<T>,
    extra: &serde_json::Value,
) -> Result<()> {
    let meta = serde_json::to_vec(&Meta { model: state.config.clone(), extra: extra.clone() })?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(meta.len() as u32).to_le_bytes())?;
    out.write_all(&meta)?;
    out.write_all(&(state.params.len() as u32).to_le_bytes())?;
    for e in state.params.entries() {
        let name = e.name.as_bytes();
        out.write_all(&(name.len() as u16).to_le_bytes())?;
        out.write_all(name)?;
        out.write_all(&[match e.group {
            ParamGroup::Embedding => 0u8,
            ParamGroup::Dense => 1u8,
        }])?;
        out.write_all(&[e.value.shape().len() as u8])?;
        for &d in e.value.shape() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(e.value.len() * 8);
        for &v in e.value.data() {
            buf.extend_from_slice(&v.as_f64().to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

/// Returns the restored state and the caller metadata stored with it.
pub fn read_checkpoint<T: Real>(mut r: impl Read) -> Result<(EncoderState<T>, serde_json::Value)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let meta_len = read_u32(&mut r)? as usize;
    let mut meta = vec![0u8; meta_len];
    r.read_exact(&mut meta)?;
    let meta: Meta = serde_json::from_slice(&meta)?;
    let count = read_u32(&mut r)? as usize;
    let mut named = Vec::with_capacity(count);
    for _ in 0..count {
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2)?;
        let mut name = vec![0u8; u16::from_le_bytes(b2) as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let mut b1 = [0u8; 2];
        r.read_exact(&mut b1)?;
        let ndim = b1[1] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(&mut r)? as usize);
        }
        let n: usize = shape.iter().product();
        let mut raw = vec![0u8; n * 8];
        r.read_exact(&mut raw)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        named.push((name, Tensor::new(shape, data)?));
    }
    let state = EncoderState::from_named(meta.model, named)?;
    Ok((state, meta.extra))
}

pub fn save<T: Real>(path: &Path, state: &EncoderState<T>, extra: &serde_json::Value) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(&mut w, state, extra)?;
    w.flush()?;
    Ok(())
}

pub fn load<T: Real>(path: &Path) -> Result<(EncoderState<T>, serde_json::Value)> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file))
}
