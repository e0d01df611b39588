//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   4 bytes  "RFDN"
//! version u16      currently 1
//! count   u32      number of tensor entries
//! entry*  count times:
//!     name_len u16, name bytes (UTF-8)
//!     dtype    u8   0 = f32 little-endian (the only defined code)
//!     rank     u8
//!     dims     rank x u32
//!     data     product(dims) x 4 bytes
//! ```
//!
//! Entries are written in ascending name order, so serializing the same
//! parameter set twice yields identical bytes. Parameters are kept in
//! `f32` throughout the crate, which makes a save/load round trip lossless.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const MAGIC: &[u8; 4] = b"RFDN";
const VERSION: u16 = 1;
const DTYPE_F32: u8 = 0;

/// Serializes named tensors to the container byte layout.
pub fn to_bytes(entries: &BTreeMap<String, Tensor<f32>>) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let count = u32::try_from(entries.len())
        .map_err(|_| Error::checkpoint("too many entries for u32 count"))?;
    out.extend_from_slice(&count.to_le_bytes());
    for (name, tensor) in entries {
        let name_bytes = name.as_bytes();
        let name_len = u16::try_from(name_bytes.len())
            .map_err(|_| Error::checkpoint(format!("name too long: {name}")))?;
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name_bytes);
        out.push(DTYPE_F32);
        let rank = u8::try_from(tensor.rank())
            .map_err(|_| Error::checkpoint(format!("rank too large for {name}")))?;
        out.push(rank);
        for &d in &tensor.shape {
            let d = u32::try_from(d)
                .map_err(|_| Error::checkpoint(format!("dimension too large in {name}")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for &v in &tensor.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::checkpoint(format!(
                "truncated: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.buf.len()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Parses the container byte layout.
pub fn from_bytes(bytes: &[u8]) -> Result<BTreeMap<String, Tensor<f32>>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::checkpoint("bad magic, not a checkpoint file"));
    }
    let version = r.u16()?;
    if version != VERSION {
        return Err(Error::checkpoint(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let count = r.u32()? as usize;
    let mut entries = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::checkpoint("entry name is not valid UTF-8"))?
            .to_string();
        let dtype = r.u8()?;
        if dtype != DTYPE_F32 {
            return Err(Error::checkpoint(format!(
                "unsupported dtype code {dtype} for entry {name}"
            )));
        }
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let numel: usize = shape.iter().product();
        let raw = r.take(numel * 4)?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        if entries.insert(name.clone(), Tensor::from_vec(&shape, data)).is_some() {
            return Err(Error::checkpoint(format!("duplicate entry name {name}")));
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::checkpoint(format!(
            "{} trailing bytes after last entry",
            bytes.len() - r.pos
        )));
    }
    Ok(entries)
}

pub fn save(path: &Path, entries: &BTreeMap<String, Tensor<f32>>) -> Result<()> {
    let bytes = to_bytes(entries)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<BTreeMap<String, Tensor<f32>>> {
    let bytes = std::fs::read(path)?;
    from_bytes(&bytes)
}
