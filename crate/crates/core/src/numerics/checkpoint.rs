//! Binary checkpoint encoding.
//!
//! Layout (all integers little-endian `u32`): magic `URCK`, format version,
//! entry count, then per entry the name length and UTF-8 name, the rank, the
//! extents, and finally the values as little-endian IEEE-754 `f64`.

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::bail;
use crate::{Result, Tensor};

pub const MAGIC: &[u8; 4] = b"URCK";
pub const VERSION: u32 = 1;

pub fn encode(entries: &[(String, Tensor)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            bail!(Format, "truncated checkpoint while reading {what} at byte {}", self.pos);
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        bail!(Format, "bad magic");
    }
    let version = r.u32("version")?;
    if version != VERSION {
        bail!(Format, "unsupported checkpoint version {version}");
    }
    let count = r.u32("entry count")? as usize;
    let mut entries = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let name = match core::str::from_utf8(r.take(len, "name")?) {
            Ok(s) => String::from(s),
            Err(_) => bail!(Format, "entry name is not UTF-8"),
        };
        let rank = r.u32("rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("extent")? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).unwrap_or(usize::MAX), "values")?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        entries.push((name, Tensor::new(&shape, data)?));
    }
    if r.pos != bytes.len() {
        bail!(Format, "{} trailing bytes", bytes.len() - r.pos);
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn layout_is_bit_exact() {
        let t = Tensor::new(&[1, 2], vec![1.0, -0.5]).unwrap();
        let bytes = encode(&[(String::from("ab"), t)]);
        let mut expect = Vec::new();
        expect.extend_from_slice(b"URCK");
        expect.extend_from_slice(&[1, 0, 0, 0]);
        expect.extend_from_slice(&[1, 0, 0, 0]);
        expect.extend_from_slice(&[2, 0, 0, 0]);
        expect.extend_from_slice(b"ab");
        expect.extend_from_slice(&[2, 0, 0, 0]);
        expect.extend_from_slice(&[1, 0, 0, 0, 2, 0, 0, 0]);
        expect.extend_from_slice(&1.0f64.to_le_bytes());
        expect.extend_from_slice(&(-0.5f64).to_le_bytes());
        assert_eq!(bytes, expect);
    }

    #[test]
    fn truncated_input_rejected() {
        let t = Tensor::full(&[3], 2.0);
        let bytes = encode(&[(String::from("x"), t)]);
        for cut in [3, 10, bytes.len() - 1] {
            assert!(decode(&bytes[..cut]).is_err());
        }
    }
}
