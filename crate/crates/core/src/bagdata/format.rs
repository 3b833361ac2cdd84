//! MBAG1 bag file format.
//!
//! ```text
//! magic       6 bytes   4D 42 41 47 31 00   ("MBAG1\0")
//! d           u32 LE
//! bag count   u32 LE
//! per bag:
//!   id        u64 LE
//!   label     u8
//!   has tags  u8        0 or 1
//!   n         u32 LE
//!   features  n·d f32 LE, row-major
//!   tags      n bytes   only when has tags = 1
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::bag::Bag;
use crate::error::{Error, Result};
use crate::numkernel::Tensor;

pub const MAGIC: [u8; 6] = *b"MBAG1\0";

pub fn encode_bags(bags: &[Bag]) -> Result<Vec<u8>> {
    let d = bags.first().map_or(0, Bag::dim);
    if let Some(b) = bags.iter().find(|b| b.dim() != d) {
        return Err(Error::shape(
            "save_bags",
            format!("bag {} has d = {}, expected {d}", b.id, b.dim()),
        ));
    }
    let total: usize = bags.iter().map(|b| 15 + b.len() * (4 * d + 1)).sum();
    let mut out = Vec::with_capacity(14 + total);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&(d as u32).to_le_bytes());
    out.extend_from_slice(&(bags.len() as u32).to_le_bytes());
    for b in bags {
        out.extend_from_slice(&b.id.to_le_bytes());
        out.push(b.label);
        out.push(u8::from(b.instance_labels.is_some()));
        out.extend_from_slice(&(b.len() as u32).to_le_bytes());
        for &v in b.instances.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        if let Some(tags) = &b.instance_labels {
            out.extend_from_slice(tags);
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos as u64,
            msg: msg.into(),
        }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.err(format!(
                "truncated while reading {what}: need {n} bytes, {} left",
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}

/// MBAG1 header: feature width and bag count.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Header {
    pub dim: usize,
    pub count: usize,
}

fn read_header(r: &mut Reader<'_>) -> Result<Header> {
    let magic = r.take(6, "magic")?;
    if magic[..4] != MAGIC[..4] {
        r.pos = 0;
        return Err(r.err(format!("bad magic {magic:02X?}")));
    }
    if magic[4..] != MAGIC[4..] {
        r.pos = 4;
        return Err(r.err(format!("unsupported version byte 0x{:02X}", magic[4])));
    }
    let dim = r.u32("d")? as usize;
    let count = r.u32("bag count")? as usize;
    Ok(Header { dim, count })
}

pub fn decode_header(buf: &[u8]) -> Result<Header> {
    read_header(&mut Reader { buf, pos: 0 })
}

pub fn decode_bags(buf: &[u8]) -> Result<Vec<Bag>> {
    let mut r = Reader { buf, pos: 0 };
    let Header { dim: d, count } = read_header(&mut r)?;
    let mut bags = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let start = r.pos;
        let id = r.u64("bag id")?;
        let label = r.u8("label")?;
        let has_tags = match r.u8("tag flag")? {
            0 => false,
            1 => true,
            other => {
                r.pos -= 1;
                return Err(r.err(format!("tag flag must be 0 or 1, got {other}")));
            }
        };
        let n = r.u32("instance count")? as usize;
        let raw = r.take(n * d * 4, "features")?;
        let data: Vec<f64> = raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect();
        let tags = if has_tags {
            Some(r.take(n, "instance tags")?.to_vec())
        } else {
            None
        };
        let bag = Bag::new(id, label, Tensor::matrix(n, d, data), tags).map_err(|e| Error::Format {
            offset: start as u64,
            msg: format!("invalid bag: {e}"),
        })?;
        bags.push(bag);
    }
    if r.pos != buf.len() {
        return Err(r.err(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(bags)
}

pub fn save_bags(bags: &[Bag], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_bags(bags)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn load_bags(path: impl AsRef<Path>) -> Result<Vec<Bag>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bags(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bag(id: u64, n: usize, tags: bool) -> Bag {
        let data = (0..n * 3).map(|i| (i as f32 * 0.37 - 1.0) as f64).collect();
        let t = tags.then(|| (0..n).map(|i| u8::from(i == 0)).collect());
        Bag::new(id, u8::from(tags), Tensor::matrix(n, 3, data), t).unwrap()
    }

    #[test]
    fn header_layout_is_exact() {
        let bytes = encode_bags(&[bag(9, 2, true)]).unwrap();
        assert_eq!(&bytes[..6], &[0x4D, 0x42, 0x41, 0x47, 0x31, 0x00]);
        assert_eq!(&bytes[6..10], &3u32.to_le_bytes());
        assert_eq!(&bytes[10..14], &1u32.to_le_bytes());
        assert_eq!(&bytes[14..22], &9u64.to_le_bytes());
        assert_eq!(bytes[22], 1);
        assert_eq!(bytes[23], 1);
        assert_eq!(&bytes[24..28], &2u32.to_le_bytes());
        assert_eq!(bytes.len(), 28 + 2 * 3 * 4 + 2);
    }

    #[test]
    fn round_trip_three_bags() {
        let bags = vec![bag(1, 2, true), bag(2, 5, false), bag(3, 1, true)];
        let back = decode_bags(&encode_bags(&bags).unwrap()).unwrap();
        assert_eq!(back, bags);
    }

    #[test]
    fn empty_list_is_valid() {
        let bytes = encode_bags(&[]).unwrap();
        assert_eq!(bytes.len(), 14);
        assert!(decode_bags(&bytes).unwrap().is_empty());
    }

    #[test]
    fn wrong_magic_reports_offset_zero() {
        let mut bytes = encode_bags(&[bag(1, 1, false)]).unwrap();
        bytes[0] = b'X';
        match decode_bags(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_version_reports_offset_four() {
        let mut bytes = encode_bags(&[]).unwrap();
        bytes[4] = b'2';
        assert!(matches!(decode_bags(&bytes), Err(Error::Format { offset: 4, .. })));
    }

    #[test]
    fn truncation_reports_offset() {
        let bytes = encode_bags(&[bag(1, 2, false)]).unwrap();
        let cut = &bytes[..bytes.len() - 3];
        match decode_bags(cut) {
            Err(Error::Format { offset, msg }) => {
                assert_eq!(offset, 28);
                assert!(msg.contains("truncated"), "{msg}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = encode_bags(&[]).unwrap();
        bytes.push(0);
        assert!(matches!(decode_bags(&bytes), Err(Error::Format { offset: 14, .. })));
    }

    #[test]
    fn mixed_dims_cannot_be_saved() {
        let a = bag(1, 1, false);
        let b = Bag::new(2, 0, Tensor::matrix(1, 2, vec![0.0, 0.0]), None).unwrap();
        assert!(encode_bags(&[a, b]).is_err());
    }
}
