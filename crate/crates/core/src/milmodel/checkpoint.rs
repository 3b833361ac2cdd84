//! Parameter checkpoint file.
//!
//! ```text
//! magic        6 bytes   "MCKP1\0"
//! entries      u32 LE
//! per entry:
//!   name len   u16 LE, then UTF-8 name
//!   rank       u32 LE, then rank × u32 LE dims
//!   offset     u64 LE    index of the first scalar in the payload
//! payload len  u64 LE    scalar count
//! payload      f32 LE
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkernel::{ParamSet, Tensor};

pub const CHECKPOINT_MAGIC: [u8; 6] = *b"MCKP1\0";

pub fn encode_params(params: &ParamSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&CHECKPOINT_MAGIC);
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for (name, t) in params.iter() {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += t.len() as u64;
    }
    out.extend_from_slice(&offset.to_le_bytes());
    for (_, t) in params.iter() {
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                msg: format!("truncated checkpoint while reading {what}"),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

pub fn decode_params(buf: &[u8]) -> Result<ParamSet> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(6, "magic")? != CHECKPOINT_MAGIC {
        return Err(Error::Format {
            offset: 0,
            msg: "not a checkpoint file".into(),
        });
    }
    let count = c.u32("entry count")? as usize;
    let mut table = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let at = c.pos as u64;
        let len = c.u16("name length")? as usize;
        let name = std::str::from_utf8(c.take(len, "name")?)
            .map_err(|_| Error::Format {
                offset: at,
                msg: "parameter name is not UTF-8".into(),
            })?
            .to_owned();
        let rank = c.u32("rank")? as usize;
        let shape = (0..rank).map(|_| c.u32("dim").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let offset = c.u64("offset")? as usize;
        table.push((at, name, shape, offset));
    }
    let total = c.u64("payload length")? as usize;
    let payload_at = c.pos;
    let raw = c.take(total.saturating_mul(4), "payload")?;
    if c.pos != buf.len() {
        return Err(Error::Format {
            offset: c.pos as u64,
            msg: format!("{} trailing bytes", buf.len() - c.pos),
        });
    }
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|b| f64::from(f32::from_le_bytes(b.try_into().expect("4 bytes"))))
        .collect();
    let mut set = ParamSet::new();
    for (at, name, shape, offset) in table {
        let len: usize = shape.iter().product();
        let bad = |msg: String| Error::Format { offset: at, msg };
        if offset + len > values.len() {
            return Err(bad(format!("{name} runs past the {}-scalar payload at {payload_at}", values.len())));
        }
        if set.get(&name).is_some() {
            return Err(bad(format!("duplicate parameter {name}")));
        }
        let t = Tensor::new(shape, values[offset..offset + len].to_vec())?;
        set.push(name, t);
    }
    Ok(set)
}

pub fn save_params(params: &ParamSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_params(params)).map_err(|e| Error::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<ParamSet> {
    let path = path.as_ref();
    decode_params(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
