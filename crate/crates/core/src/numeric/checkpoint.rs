//! Flat binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "ACMT"  u32 version
//! repeated until EOF:
//!   u32 name_len, name (UTF-8), u32 rank, rank × u64 dims, numel × f64 payload
//! ```

use std::fs;
use std::path::Path;

use crate::error::{AcmError, Result};
use crate::numeric::params::ParamStore;
use crate::numeric::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"ACMT";
pub const VERSION: u32 = 1;

/// An ordered list of named tensors as stored on disk.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.entries.push((name.into(), t));
    }

    pub fn push_scalar(&mut self, name: impl Into<String>, v: f64) {
        self.push(name, Tensor::scalar(v));
    }

    pub fn push_store(&mut self, prefix: &str, store: &ParamStore) {
        for (name, t) in store.iter() {
            let mut t = t.clone();
            t.grad = None;
            self.push(format!("{prefix}{name}"), t);
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn scalar(&self, name: &str) -> Result<f64> {
        let t = self
            .get(name)
            .ok_or_else(|| AcmError::Checkpoint(format!("missing entry {name:?}")))?;
        if t.numel() != 1 {
            return Err(AcmError::Checkpoint(format!("{name:?} is not a scalar")));
        }
        Ok(t.data()[0])
    }

    /// Integer-valued scalar metadata.
    pub fn usize(&self, name: &str) -> Result<usize> {
        let v = self.scalar(name)?;
        if v < 0.0 || v.fract() != 0.0 {
            return Err(AcmError::Checkpoint(format!("{name:?} = {v} is not a count")));
        }
        Ok(v as usize)
    }

    /// Overwrites every parameter of `store` from entries named `prefix + name`.
    pub fn fill_store(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let key = format!("{prefix}{}", store.name(id));
            let t = self
                .get(&key)
                .ok_or_else(|| AcmError::Checkpoint(format!("missing tensor {key:?}")))?;
            if t.shape() != store.get(id).shape() {
                return Err(AcmError::Checkpoint(format!(
                    "{key:?}: stored shape {:?}, model expects {:?}",
                    t.shape(),
                    store.get(id).shape()
                )));
            }
            *store.get_mut(id) = t.clone();
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(AcmError::Checkpoint("bad magic, not an ACMT file".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(AcmError::Checkpoint(format!(
                "unsupported checkpoint version {version} (expected {VERSION})"
            )));
        }
        let mut ck = Checkpoint::new();
        while r.pos < bytes.len() {
            let len = r.u32()? as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| AcmError::Checkpoint("tensor name is not UTF-8".into()))?;
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let numel: usize = shape.iter().product();
            let payload = r.take(numel * 8)?;
            let data = payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            ck.push(name, Tensor::new(shape, data)?);
        }
        Ok(ck)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| AcmError::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| AcmError::io(path, e))?;
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
            .ok_or_else(|| AcmError::Checkpoint("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let mut ck = Checkpoint::new();
        ck.push("w", Tensor::new(vec![1, 2], vec![1.5, -0.0]).unwrap());
        let b = ck.to_bytes();
        assert_eq!(&b[..4], b"ACMT");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[8..12], &1u32.to_le_bytes());
        assert_eq!(b[12], b'w');
        assert_eq!(b.len(), 8 + 4 + 1 + 4 + 16 + 16);
    }

    #[test]
    fn rejects_bad_magic_version_and_truncation() {
        assert!(Checkpoint::from_bytes(b"NOPE\x01\0\0\0").is_err());
        assert!(Checkpoint::from_bytes(b"ACMT\x02\0\0\0").is_err());
        let mut ck = Checkpoint::new();
        ck.push_scalar("x", 1.0);
        let b = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&b[..b.len() - 1]).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(
            tensors in prop::collection::vec(
                (
                    "[a-z.]{1,12}",
                    prop::collection::vec(1usize..4, 0..3),
                    any::<u64>(),
                ),
                0..5,
            )
        ) {
            let mut ck = Checkpoint::new();
            for (name, shape, bits) in &tensors {
                let n: usize = shape.iter().product();
                let data = (0..n as u64)
                    .map(|i| f64::from_bits(bits.wrapping_add(i.wrapping_mul(0x9E37_79B9))))
                    .map(|v| if v.is_nan() { 0.25 } else { v })
                    .collect();
                ck.push(name.clone(), Tensor::new(shape.clone(), data).unwrap());
            }
            let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
            prop_assert_eq!(back.entries.len(), ck.entries.len());
            for ((n1, t1), (n2, t2)) in ck.entries.iter().zip(&back.entries) {
                prop_assert_eq!(n1, n2);
                prop_assert_eq!(t1.shape(), t2.shape());
                let b1: Vec<u64> = t1.data().iter().map(|v| v.to_bits()).collect();
                let b2: Vec<u64> = t2.data().iter().map(|v| v.to_bits()).collect();
                prop_assert_eq!(b1, b2);
            }
        }
    }
}
