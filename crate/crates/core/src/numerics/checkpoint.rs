//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic     8 bytes  "TAILAUG\0"
//! version   u32
//! count     u32
//! count × { name_len u32, name utf-8, rows u64, cols u64, offset u64 }
//! payload   f64 values; `offset` counts f64 slots from the payload start
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::dense::DenseMatrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"TAILAUG\0";
pub const VERSION: u32 = 1;

/// Named matrices, ordered by name.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub tensors: BTreeMap<String, DenseMatrix>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, m: DenseMatrix) {
        self.tensors.insert(name.into(), m);
    }

    /// Fetches a tensor and checks its shape.
    pub fn take(&self, name: &str, shape: (usize, usize)) -> Result<DenseMatrix> {
        let m = self
            .tensors
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor '{name}'")))?;
        if m.shape() != shape {
            return Err(Error::Checkpoint(format!(
                "tensor '{name}' is {}x{}, expected {}x{}",
                m.rows(),
                m.cols(),
                shape.0,
                shape.1
            )));
        }
        Ok(m.clone())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for (name, m) in &self.tensors {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u64).to_le_bytes());
            out.extend_from_slice(&offset.to_le_bytes());
            offset += m.data().len() as u64;
        }
        for m in self.tensors.values() {
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported version {version} (expected {VERSION})"
            )));
        }
        let count = r.u32()? as usize;
        let mut index = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Checkpoint("tensor name is not utf-8".into()))?
                .to_string();
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let offset = r.u64()? as usize;
            index.push((name, rows, cols, offset));
        }
        let payload = &bytes[r.pos..];
        let mut tensors = BTreeMap::new();
        for (name, rows, cols, offset) in index {
            let len = rows
                .checked_mul(cols)
                .ok_or_else(|| Error::Checkpoint(format!("tensor '{name}' shape overflows")))?;
            let start = offset.checked_mul(8);
            let end = offset.checked_add(len).and_then(|e| e.checked_mul(8));
            let (Some(start), Some(end)) = (start, end) else {
                return Err(Error::Checkpoint(format!(
                    "tensor '{name}' offset overflows"
                )));
            };
            if end > payload.len() {
                return Err(Error::Checkpoint(format!("tensor '{name}' is truncated")));
            }
            let data = payload[start..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.insert(name, DenseMatrix::from_vec(rows, cols, data)?);
        }
        Ok(Self { tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut c = Checkpoint::new();
        c.insert(
            "b",
            DenseMatrix::from_rows(&[vec![1.0, -2.5], vec![3.0, 1e-300]]).unwrap(),
        );
        c.insert("a", DenseMatrix::column(&[0.1, 0.2, 0.3]));
        c
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let c = sample();
        assert_eq!(Checkpoint::from_bytes(&c.to_bytes()).unwrap(), c);
    }

    #[test]
    fn corrupt_header_is_rejected() {
        let mut bytes = sample().to_bytes();
        bytes[0] = b'X';
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");

        let mut bytes = sample().to_bytes();
        bytes[8] = 99;
        let err = Checkpoint::from_bytes(&bytes).unwrap_err();
        assert!(err.to_string().contains("version"), "{err}");
    }

    #[test]
    fn truncation_is_rejected() {
        let bytes = sample().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 4]).is_err());
        assert!(Checkpoint::from_bytes(&bytes[..10]).is_err());
    }

    #[test]
    fn take_checks_shape() {
        let c = sample();
        assert!(c.take("a", (3, 1)).is_ok());
        assert!(c.take("a", (1, 3)).is_err());
        assert!(c.take("zz", (1, 1)).is_err());
    }
}
