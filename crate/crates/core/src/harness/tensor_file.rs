//! `RMT1` tensor container: magic `RMT1`, dtype `u8` (0 = f64), rank `u8`,
//! little-endian `u64` extents, then the little-endian payload. Several
//! tensors are stored as consecutive blocks.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Tensor;

const MAGIC: &[u8; 4] = b"RMT1";
const DTYPE_F64: u8 = 0;

pub fn encode_tensor(t: &Tensor, out: &mut Vec<u8>) -> Result<()> {
    let rank = u8::try_from(t.rank()).map_err(|_| Error::TensorFile(format!("rank {} exceeds 255", t.rank())))?;
    out.extend_from_slice(MAGIC);
    out.push(DTYPE_F64);
    out.push(rank);
    for d in t.shape() {
        out.extend_from_slice(&(*d as u64).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(())
}

/// Decodes one block starting at `bytes[0]`; returns the tensor and the
/// number of bytes consumed.
pub fn decode_tensor(bytes: &[u8]) -> Result<(Tensor, usize)> {
    let short = |what: &str| Error::TensorFile(format!("truncated {what}"));
    if bytes.len() < 6 {
        return Err(short("header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::TensorFile(format!("bad magic {:02x?}", &bytes[..4])));
    }
    if bytes[4] != DTYPE_F64 {
        return Err(Error::TensorFile(format!("unsupported dtype code {}", bytes[4])));
    }
    let rank = bytes[5] as usize;
    let mut pos = 6;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let raw = bytes.get(pos..pos + 8).ok_or_else(|| short("extents"))?;
        let d = u64::from_le_bytes(raw.try_into().expect("eight bytes"));
        shape.push(usize::try_from(d).map_err(|_| Error::TensorFile(format!("extent {d} too large")))?);
        pos += 8;
    }
    let count = shape
        .iter()
        .try_fold(1usize, |a, d| a.checked_mul(*d))
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::TensorFile("extents overflow".into()))?;
    let payload = bytes.get(pos..pos + count).ok_or_else(|| short("payload"))?;
    let data = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")))
        .collect();
    Ok((Tensor::new(shape, data)?, pos + count))
}

pub fn write_tensors(path: &Path, tensors: &[Tensor]) -> Result<()> {
    let mut out = Vec::new();
    for t in tensors {
        encode_tensor(t, &mut out)?;
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_tensors(path: &Path) -> Result<Vec<Tensor>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0;
    let mut out = Vec::new();
    while pos < bytes.len() {
        let (t, used) = decode_tensor(&bytes[pos..])?;
        out.push(t);
        pos += used;
    }
    Ok(out)
}
