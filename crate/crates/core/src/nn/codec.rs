//! Binary container for [`ModelParameters`].
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic        b"HFND"
//! version      u32   (currently 1)
//! entry count  u32
//! round        u64
//! per entry:
//!   name length u32, name bytes (UTF-8)
//!   weights:  rank u32, dims u64 x rank, values f64 x product(dims)
//!   biases:   rank u32, dims u64 x rank, values f64 x product(dims)
//! ```

use std::fs;
use std::path::Path;

use super::params::{ModelParameters, ParamEntry};
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"HFND";
pub const FORMAT_VERSION: u32 = 1;

pub fn encode(params: &ModelParameters) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + params.param_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.entries.len() as u32).to_le_bytes());
    out.extend_from_slice(&params.round.to_le_bytes());
    for entry in &params.entries {
        out.extend_from_slice(&(entry.name.len() as u32).to_le_bytes());
        out.extend_from_slice(entry.name.as_bytes());
        write_tensor(&mut out, &entry.weights);
        write_tensor(&mut out, &entry.biases);
    }
    out
}

fn write_tensor(out: &mut Vec<u8>, t: &Tensor) {
    out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
    for &d in t.shape() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for v in t.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Decode(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            let d = usize::try_from(self.u64()?)
                .map_err(|_| Error::Decode("dimension overflows usize".into()))?;
            shape.push(d);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Decode("element count overflows".into()))?;
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Decode("size overflow".into()))?)?;
        let values = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Tensor::new(shape, values).map_err(|e| Error::Decode(e.to_string()))
    }
}

pub fn decode(bytes: &[u8]) -> Result<ModelParameters> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::Decode("bad magic, expected HFND".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Decode(format!("unsupported format version {version}")));
    }
    let count = r.u32()? as usize;
    let round = r.u64()?;
    let mut entries = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| Error::Decode(format!("entry name: {e}")))?
            .to_owned();
        let weights = r.tensor()?;
        let biases = r.tensor()?;
        entries.push(ParamEntry {
            name,
            weights,
            biases,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::Decode(format!(
            "{} trailing bytes after last entry",
            bytes.len() - r.pos
        )));
    }
    Ok(ModelParameters { entries, round })
}

pub fn save(params: &ModelParameters, path: &Path) -> Result<()> {
    fs::write(path, encode(params))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<ModelParameters> {
    decode(&fs::read(path)?)
}
