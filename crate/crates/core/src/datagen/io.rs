//! NFV volume container.
//!
//! Layout: magic `NFVOL1\0`, `u8` kind (0 intensity, 1 labels), `u8` rank,
//! one `u32` LE extent per axis, `u32` LE channel count, then the payload in
//! C order: `f32` LE for intensity, `u8` for labels.

use std::fs;
use std::path::Path;

use super::{Volume, VolumeData};
use crate::error::{Error, Result};

pub const NFV_MAGIC: &[u8; 7] = b"NFVOL1\0";

pub fn write_volume(v: &Volume) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + v.num_voxels() * v.channels() * 4);
    out.extend_from_slice(NFV_MAGIC);
    out.push(match v.data() {
        VolumeData::Intensity(_) => 0,
        VolumeData::Labels(_) => 1,
    });
    out.push(v.dims().len() as u8);
    for &d in v.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&(v.channels() as u32).to_le_bytes());
    match v.data() {
        VolumeData::Intensity(vals) => {
            for x in vals {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        VolumeData::Labels(vals) => out.extend_from_slice(vals),
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() < self.pos + n {
            return Err(Error::Format {
                offset: self.pos,
                message: format!(
                    "truncated {what}: expected {} bytes, file has {}",
                    self.pos + n,
                    self.buf.len()
                ),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    }
}

pub fn read_volume(buf: &[u8]) -> Result<Volume> {
    let mut r = Reader { buf, pos: 0 };
    if r.take(NFV_MAGIC.len(), "magic")? != NFV_MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad magic, not an NFV volume".into(),
        });
    }
    let kind_at = r.pos;
    let kind = r.take(1, "kind")?[0];
    if kind > 1 {
        return Err(Error::Format {
            offset: kind_at,
            message: format!("unknown data kind {kind}"),
        });
    }
    let ndim = r.take(1, "rank")?[0] as usize;
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        dims.push(r.u32("extent")? as usize);
    }
    let channels = r.u32("channel count")? as usize;
    let count = dims
        .iter()
        .try_fold(channels, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::Format {
            offset: r.pos,
            message: "volume size overflows".into(),
        })?;
    let elem = if kind == 0 { 4 } else { 1 };
    let payload_at = r.pos;
    let payload = r.take(count * elem, "payload")?;
    if r.pos != buf.len() {
        return Err(Error::Format {
            offset: r.pos,
            message: format!(
                "{} trailing bytes after payload starting at {payload_at}",
                buf.len() - r.pos
            ),
        });
    }
    let data = if kind == 0 {
        VolumeData::Intensity(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect(),
        )
    } else {
        VolumeData::Labels(payload.to_vec())
    };
    Volume::new(dims, channels, data)
}

pub fn save_volume(v: &Volume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, write_volume(v)).map_err(|e| Error::from(e).with_path(path))
}

pub fn load_volume(path: impl AsRef<Path>) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).with_path(path))?;
    read_volume(&bytes).map_err(|e| e.with_path(path))
}
