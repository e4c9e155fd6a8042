//! Model checkpoint container.
//!
//! Layout: magic `NFCKPT1\0`; `u32` LE length plus JSON-encoded
//! [`ModelConfig`]; `u32` parameter count; per parameter in set order a
//! `u32` name length, the UTF-8 name, `u8` rank, `u32` extents and the
//! values as `f32` LE; finally `u32` coordinate-map size followed by
//! `(u64 key, u32 row)` pairs sorted by key (size 0 for non-DINER models).

use std::fs;
use std::path::Path;

use super::{CoordMap, FieldModel, ModelConfig};
use crate::diffcore::{ParamSet, Real, Tensor};
use crate::error::{Error, Result};

pub const CKPT_MAGIC: &[u8; 8] = b"NFCKPT1\0";

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn write_checkpoint<T: Real>(model: &FieldModel<T>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    let cfg = serde_json::to_vec(model.config())?;
    put_u32(&mut out, cfg.len());
    out.extend_from_slice(&cfg);
    put_u32(&mut out, model.params().len());
    for (_, name, t) in model.params().iter() {
        put_u32(&mut out, name.len());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape().len() as u8);
        for &d in t.shape() {
            put_u32(&mut out, d);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_f32().unwrap_or(f32::NAN).to_le_bytes());
        }
    }
    match model.coord_map() {
        Some(map) => {
            put_u32(&mut out, map.len());
            for (k, r) in map.sorted_entries() {
                out.extend_from_slice(&k.to_le_bytes());
                put_u32(&mut out, r);
            }
        }
        None => put_u32(&mut out, 0),
    }
    Ok(out)
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(Error::Format {
                offset: self.pos,
                message: format!(
                    "truncated checkpoint: need {n} more bytes, {} left",
                    self.buf.len() - self.pos
                ),
            });
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn read_checkpoint(buf: &[u8]) -> Result<FieldModel<f32>> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(CKPT_MAGIC.len())? != CKPT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad magic, not a model checkpoint".into(),
        });
    }
    let len = c.u32()?;
    let at = c.pos;
    let config: ModelConfig = serde_json::from_slice(c.take(len)?).map_err(|e| Error::Format {
        offset: at,
        message: format!("model config: {e}"),
    })?;
    let count = c.u32()?;
    let mut params = ParamSet::new();
    for _ in 0..count {
        let n = c.u32()?;
        let at = c.pos;
        let name = std::str::from_utf8(c.take(n)?)
            .map_err(|_| Error::Format {
                offset: at,
                message: "parameter name is not UTF-8".into(),
            })?
            .to_owned();
        let rank = c.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32()?);
        }
        let numel: usize = shape.iter().product();
        let data = c
            .take(numel * 4)?
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        params.insert(name, Tensor::new(shape, data)?)?;
    }
    let entries = c.u32()?;
    let coord_map = if entries > 0 {
        let mut pairs = Vec::with_capacity(entries);
        for _ in 0..entries {
            let k = c.u64()?;
            pairs.push((k, c.u32()?));
        }
        Some(CoordMap::from_entries(&pairs)?)
    } else {
        None
    };
    if c.pos != buf.len() {
        return Err(Error::Format {
            offset: c.pos,
            message: "trailing bytes after checkpoint".into(),
        });
    }
    FieldModel::from_parts(config, params, coord_map)
}

pub fn save_checkpoint<T: Real>(model: &FieldModel<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_checkpoint(model)?).map_err(|e| Error::from(e).with_path(path))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<FieldModel<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).with_path(path))?;
    read_checkpoint(&bytes).map_err(|e| e.with_path(path))
}
