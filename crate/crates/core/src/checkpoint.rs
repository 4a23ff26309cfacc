//! LDPS parameter container.
//!
//! Layout, all little-endian: magic `b"LDPS"`, `u32` version (1), `u32`
//! tensor count, then per tensor a `u32` name length, the UTF-8 name, `u32`
//! rank, `rank` x `u32` dims and the values as `f64`. Lossless.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::autodiff::ParamSet;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"LDPS";
pub const VERSION: u32 = 1;

pub fn encode_params(p: &ParamSet) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * p.total_dim());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(p.len() as u32).to_le_bytes());
    for (name, t) in p.entries() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode_params(bytes: &[u8]) -> Result<ParamSet> {
    let mut pos = 0usize;
    let mut take = |n: usize, what: &str| -> Result<(usize, &[u8])> {
        let at = pos;
        match at.checked_add(n).filter(|&e| e <= bytes.len()) {
            Some(end) => {
                pos = end;
                Ok((at, &bytes[at..end]))
            }
            None => Err(Error::Format {
                pos: at as u64,
                msg: format!("truncated while reading {what}"),
            }),
        }
    };
    let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap()) as usize;
    let (_, magic) = take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format {
            pos: 0,
            msg: "bad magic, expected \"LDPS\"".into(),
        });
    }
    let (at, v) = take(4, "version")?;
    if u32_at(v) != VERSION as usize {
        return Err(Error::Format {
            pos: at as u64,
            msg: format!("unsupported version {}", u32_at(v)),
        });
    }
    let count = u32_at(take(4, "tensor count")?.1);
    let mut p = ParamSet::new();
    for _ in 0..count {
        let len = u32_at(take(4, "name length")?.1);
        let (at, raw) = take(len, "name")?;
        let name = std::str::from_utf8(raw).map_err(|_| Error::Format {
            pos: at as u64,
            msg: "name is not UTF-8".into(),
        })?;
        let (at, r) = take(4, "rank")?;
        let rank = u32_at(r);
        if rank == 0 || rank > 8 {
            return Err(Error::Format {
                pos: at as u64,
                msg: format!("rank {rank} outside 1..=8"),
            });
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(u32_at(take(4, "dimension")?.1));
        }
        let n: usize = shape.iter().product();
        let (at, body) = take(8 * n, "values")?;
        let data = body
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Format {
            pos: at as u64,
            msg: e.to_string(),
        })?;
        p.push(name, t).map_err(|e| Error::Format {
            pos: at as u64,
            msg: e.to_string(),
        })?;
    }
    if pos != bytes.len() {
        return Err(Error::Format {
            pos: pos as u64,
            msg: format!("{} trailing bytes", bytes.len() - pos),
        });
    }
    Ok(p)
}

pub fn save_params(path: impl AsRef<Path>, p: &ParamSet) -> Result<()> {
    std::fs::write(path, encode_params(p))?;
    Ok(())
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ParamSet> {
    decode_params(&std::fs::read(path)?)
}

/// Lowercase hex SHA-256.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let mut p = ParamSet::new();
        p.push("a.weight", Tensor::new(vec![2, 3], vec![0.1, -2.5, 1e-300, 3.0, f64::MAX, -0.0]).unwrap())
            .unwrap();
        p.push("b", Tensor::scalar(std::f64::consts::PI)).unwrap();
        let q = decode_params(&encode_params(&p)).unwrap();
        assert_eq!(p, q);
    }

    #[test]
    fn truncation_is_rejected() {
        let mut p = ParamSet::new();
        p.push("w", Tensor::ones(&[4])).unwrap();
        let b = encode_params(&p);
        assert!(matches!(decode_params(&b[..b.len() - 1]), Err(Error::Format { .. })));
    }
}
