//! Binary parameter container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic  b"BHCK"
//! u32    format version (currently 1)
//! u32    entry count
//! entry: u32 path length, UTF-8 path bytes,
//!        u32 rank, rank x u64 dims,
//!        product(dims) x f64 bit patterns, row-major
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a save/load round trip is
//! bitwise exact.

use std::path::Path;

use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"BHCK";
pub const FORMAT_VERSION: u32 = 1;

/// Ordered map from parameter path (`"left/gru/wz"`) to tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    entries: Vec<(String, Tensor)>,
}

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, path: impl Into<String>, t: Tensor) {
        let path = path.into();
        match self.entries.iter_mut().find(|(p, _)| *p == path) {
            Some(slot) => slot.1 = t,
            None => self.entries.push((path, t)),
        }
    }

    pub fn get(&self, path: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(p, _)| p == path).map(|(_, t)| t)
    }

    /// Fetches a tensor and checks its shape.
    pub fn take(&self, path: &str, shape: &[usize]) -> Result<Tensor> {
        let t = self
            .get(path)
            .ok_or_else(|| Error::config(format!("checkpoint has no entry {path:?}")))?;
        if t.shape() != shape {
            return Err(Error::config(format!(
                "checkpoint entry {path:?} has shape {:?}, expected {shape:?}",
                t.shape()
            )));
        }
        Ok(t.clone())
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (path, t) in &self.entries {
            out.extend_from_slice(&(path.len() as u32).to_le_bytes());
            out.extend_from_slice(path.as_bytes());
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err("bad magic".into());
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(format!("unsupported format version {version}"));
        }
        let count = r.u32()?;
        let mut ck = Checkpoint::new();
        for _ in 0..count {
            let len = r.u32()? as usize;
            let path = std::str::from_utf8(r.take(len)?)
                .map_err(|e| format!("path is not UTF-8: {e}"))?
                .to_string();
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let data = (0..n)
                .map(|_| r.u64().map(f64::from_bits))
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let t = Tensor::new(shape, data).map_err(|e| format!("entry {path:?}: {e}"))?;
            ck.entries.push((path, t));
        }
        if r.pos != bytes.len() {
            return Err("trailing bytes".into());
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes).map_err(|reason| Error::Checkpoint {
            path: path.to_path_buf(),
            reason,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| "truncated checkpoint".to_string())?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bitwise(
            vals in proptest::collection::vec(any::<f64>(), 1..40),
            name in "[a-z/]{1,12}",
        ) {
            let mut ck = Checkpoint::new();
            ck.insert(name.clone(), Tensor::vector(vals.clone()));
            ck.insert("other/bias", Tensor::zeros(&[2, 3]));
            let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            prop_assert_eq!(back.len(), ck.len());
            for ((pa, ta), (pb, tb)) in ck.entries().iter().zip(back.entries()) {
                prop_assert_eq!(pa, pb);
                prop_assert_eq!(ta.shape(), tb.shape());
                prop_assert_eq!(bits(ta), bits(tb));
            }
        }
    }

    #[test]
    fn corrupt_input_is_reported() {
        let mut ck = Checkpoint::new();
        ck.insert("w", Tensor::vector(vec![1.0, 2.0]));
        let bytes = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert!(Checkpoint::from_bytes(b"NOPE").is_err());
        let mut wrong_version = bytes.clone();
        wrong_version[4] = 9;
        assert!(Checkpoint::from_bytes(&wrong_version).is_err());
    }

    #[test]
    fn take_checks_shape() {
        let mut ck = Checkpoint::new();
        ck.insert("w", Tensor::zeros(&[2, 2]));
        assert!(ck.take("w", &[2, 2]).is_ok());
        assert!(ck.take("w", &[4]).is_err());
        assert!(ck.take("missing", &[1]).is_err());
    }
}
