//! Flat named-tensor container used for kernel weight files.
//!
//! Byte layout (all integers little-endian):
//!
//! ```text
//! magic    4 bytes   b"NTSR"
//! version  u32       1
//! count    u32       number of tensors
//! repeated `count` times:
//!   name_len u16     length of the UTF-8 name in bytes (1..=1024)
//!   name     [u8]    UTF-8, unique within the file
//!   ndim     u8      0..=8
//!   dims     [u32]   ndim entries
//!   data     [f64]   product(dims) values, row-major, IEEE-754 binary64 LE
//! ```
//!
//! A zero-dimensional tensor holds one value. Trailing bytes are an error.

use std::collections::BTreeMap;

use crate::error::{malformed, Result};

pub const MAGIC: &[u8; 4] = b"NTSR";
pub const VERSION: u32 = 1;
const MAX_NAME: usize = 1024;
const MAX_NDIM: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data }
    }

    pub fn scalar(v: f64) -> Self {
        Self {
            shape: vec![],
            data: vec![v],
        }
    }
}

/// Ordered map of tensors; iteration (and encoding) order is by name.
pub type TensorMap = BTreeMap<String, NamedTensor>;

pub fn encode(tensors: &TensorMap) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.shape.len() as u8);
        for &d in &t.shape {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &t.data {
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
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| malformed(format!("truncated tensor file at byte {}", self.pos)))?;
        let slice = &self.buf[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<TensorMap> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(malformed("bad tensor file magic"));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(malformed(format!("unsupported tensor file version {version}")));
    }
    let count = r.u32()? as usize;
    let mut out = TensorMap::new();
    for _ in 0..count {
        let name_len = r.u16()? as usize;
        if name_len == 0 || name_len > MAX_NAME {
            return Err(malformed(format!("tensor name length {name_len} out of range")));
        }
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| malformed("tensor name is not UTF-8"))?
            .to_owned();
        let ndim = r.u8()? as usize;
        if ndim > MAX_NDIM {
            return Err(malformed(format!("tensor `{name}` has {ndim} dims (max {MAX_NDIM})")));
        }
        let mut shape = Vec::with_capacity(ndim);
        let mut len = 1usize;
        for _ in 0..ndim {
            let d = r.u32()? as usize;
            len = len
                .checked_mul(d)
                .ok_or_else(|| malformed(format!("tensor `{name}` size overflows")))?;
            shape.push(d);
        }
        let byte_len = len
            .checked_mul(8)
            .ok_or_else(|| malformed(format!("tensor `{name}` size overflows")))?;
        let raw = r.take(byte_len)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        if out.insert(name.clone(), NamedTensor { shape, data }).is_some() {
            return Err(malformed(format!("duplicate tensor `{name}`")));
        }
    }
    if r.pos != bytes.len() {
        return Err(malformed(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_layout() {
        let mut m = TensorMap::new();
        m.insert("a".into(), NamedTensor::new(vec![2], vec![1.0, -2.0]));
        let bytes = encode(&m);
        let mut expected = b"NTSR".to_vec();
        expected.extend_from_slice(&[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, b'a', 1, 2, 0, 0, 0]);
        expected.extend_from_slice(&1.0f64.to_le_bytes());
        expected.extend_from_slice(&(-2.0f64).to_le_bytes());
        assert_eq!(bytes, expected);
    }

    #[test]
    fn rejects_garbage() {
        assert!(decode(b"").is_err());
        assert!(decode(b"NTSX\x01\0\0\0\0\0\0\0").is_err());
        assert!(decode(b"NTSR\x02\0\0\0\0\0\0\0").is_err());
        assert!(decode(b"NTSR\x01\0\0\0\x01\0\0\0").is_err());
        let mut m = TensorMap::new();
        m.insert("w".into(), NamedTensor::scalar(3.0));
        let mut bytes = encode(&m);
        bytes.push(0);
        assert!(decode(&bytes).is_err());
        bytes.truncate(bytes.len() - 2);
        assert!(decode(&bytes).is_err());
        // absurd dimensions must not allocate
        let mut huge = b"NTSR\x01\0\0\0\x01\0\0\0\x01\0x\x02".to_vec();
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        huge.extend_from_slice(&u32::MAX.to_le_bytes());
        assert!(decode(&huge).is_err());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut bytes = b"NTSR\x01\0\0\0\x02\0\0\0".to_vec();
        for _ in 0..2 {
            bytes.extend_from_slice(&[1, 0, b'x', 0]);
            bytes.extend_from_slice(&0.5f64.to_le_bytes());
        }
        assert!(decode(&bytes).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(entries in proptest::collection::btree_map("[a-z.0-9]{1,12}",
                        proptest::collection::vec(-1e6..1e6f64, 0..10), 0..6)) {
            let m: TensorMap = entries
                .into_iter()
                .map(|(k, v)| (k, NamedTensor::new(vec![v.len()], v)))
                .collect();
            prop_assert_eq!(decode(&encode(&m)).unwrap(), m);
        }

        #[test]
        fn decode_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..200)) {
            let _ = decode(&bytes);
        }
    }
}
