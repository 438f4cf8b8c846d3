//! PIXW weight files.
//!
//! Little-endian: magic `PIXW`, `u32` version, `u32` tensor count, then per
//! tensor a `u32` name length, the UTF-8 name, a `u8` dtype (0 = f32), a `u8`
//! rank, `rank` `u32` dims and the row-major `f32` payload.

use std::fs;
use std::path::Path;

use crate::binio::{put_f32s, put_u32, to_u32, ByteReader};
use crate::error::{PixieError, Result};
use crate::params::{NamedTensor, WeightStore};

pub const PIXW_MAGIC: &[u8; 4] = b"PIXW";
pub const PIXW_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

pub fn weights_to_bytes(store: &WeightStore) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(12 + store.numel() * 4);
    out.extend_from_slice(PIXW_MAGIC);
    put_u32(&mut out, PIXW_VERSION);
    put_u32(&mut out, to_u32(store.len(), "tensor count")?);
    for t in store.iter() {
        put_u32(&mut out, to_u32(t.name.len(), "tensor name length")?);
        out.extend_from_slice(t.name.as_bytes());
        out.push(DTYPE_F32);
        let rank = u8::try_from(t.dims.len())
            .map_err(|_| PixieError::Length(format!("tensor '{}' has rank {} > 255", t.name, t.dims.len())))?;
        out.push(rank);
        for &d in &t.dims {
            put_u32(&mut out, to_u32(d, "tensor dim")?);
        }
        put_f32s(&mut out, &t.data);
    }
    Ok(out)
}

pub fn weights_from_bytes(bytes: &[u8]) -> Result<WeightStore> {
    let mut r = ByteReader::new(bytes, "PIXW");
    r.expect_magic(PIXW_MAGIC)?;
    let version = r.u32()?;
    if version != PIXW_VERSION {
        return Err(PixieError::Format(format!(
            "PIXW version {version} is not supported (expected {PIXW_VERSION})"
        )));
    }
    let count = r.u32()? as usize;
    let mut store = WeightStore::new();
    for i in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.bytes(name_len)?)
            .map_err(|_| PixieError::Format(format!("PIXW tensor {i} has a non-UTF-8 name")))?
            .to_string();
        let dtype = r.u8()?;
        if dtype != DTYPE_F32 {
            return Err(PixieError::Format(format!("PIXW tensor '{name}' has unknown dtype {dtype}")));
        }
        let rank = r.u8()? as usize;
        let dims = (0..rank)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        let numel = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| PixieError::Length(format!("PIXW tensor '{name}' dims {dims:?} overflow")))?;
        let data = r.f32s(numel)?;
        store
            .push(NamedTensor { name, dims, data })
            .map_err(|e| PixieError::Format(format!("PIXW: {e}")))?;
    }
    r.finish()?;
    Ok(store)
}

pub fn save_weights(store: &WeightStore, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, weights_to_bytes(store)?)?;
    Ok(())
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<WeightStore> {
    weights_from_bytes(&fs::read(path)?)
}
