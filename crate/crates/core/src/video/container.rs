//! LDVD tensor container.
//!
//! Layout, all little-endian: magic `b"LDVD"`, `u32` version (1), `u32`
//! rank, `rank` x `u32` dims, then the values as row-major `f32`. Values are
//! narrowed from `f64` on save, so a round trip is bit-exact only for
//! tensors already representable in `f32`.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"LDVD";
pub const VERSION: u32 = 1;

pub fn encode_video(t: &Tensor) -> Result<Vec<u8>> {
    check_dims(t.shape(), 8)?;
    let mut out = Vec::with_capacity(12 + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| Error::invalid(format!("dimension {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for &v in t.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_video(bytes: &[u8]) -> Result<Tensor> {
    let mut r = Cursor { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format {
            pos: 0,
            msg: "bad magic, expected \"LDVD\"".into(),
        });
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Format {
            pos: 4,
            msg: format!("unsupported version {version}"),
        });
    }
    let rank = r.u32("rank")? as usize;
    let dims_at = r.pos;
    if rank == 0 || rank > 8 {
        return Err(Error::Format {
            pos: 8,
            msg: format!("rank {rank} outside 1..=8"),
        });
    }
    let shape = (0..rank).map(|_| r.u32("dimension").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
    check_dims(&shape, 8).map_err(|e| Error::Format {
        pos: dims_at as u64,
        msg: e.to_string(),
    })?;
    let n: usize = shape.iter().product();
    let body = r.take(4 * n, "values")?;
    let data = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    if r.pos != bytes.len() {
        return Err(Error::Format {
            pos: r.pos as u64,
            msg: format!("{} trailing bytes", bytes.len() - r.pos),
        });
    }
    Tensor::new(shape, data)
}

pub fn save_video(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    let bytes = encode_video(t)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load_video(path: impl AsRef<Path>) -> Result<Tensor> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_video(&bytes)
}

fn check_dims(shape: &[usize], max_rank: usize) -> Result<()> {
    if shape.is_empty() || shape.len() > max_rank {
        return Err(Error::invalid(format!("rank {} outside 1..={max_rank}", shape.len())));
    }
    if shape.contains(&0) {
        return Err(Error::invalid(format!("empty dimension in shape {shape:?}")));
    }
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format {
                pos: self.bytes.len() as u64,
                msg: format!("truncated while reading {what} at byte {}", self.pos),
            }),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}
