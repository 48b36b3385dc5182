//! Checkpoint container.
//!
//! ```text
//! magic        8 bytes  "FSEGCKPT"
//! version      u16 LE   (1)
//! config hash  u64 LE
//! count        u32 LE   number of records
//! record × count:
//!   name_len   u32 LE, then name bytes (UTF-8)
//!   ndim       u32 LE, then ndim × u64 LE extents
//!   payload    product(extents) × f64 LE
//! ```
//!
//! Values are stored as raw `f64` bits, so decoding an encoded checkpoint
//! reproduces every parameter exactly.

use std::fs;
use std::path::Path;

use super::ModelError;
use crate::tensor::NdArray;

pub const MAGIC: &[u8; 8] = b"FSEGCKPT";
pub const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config_hash: u64,
    pub params: Vec<(String, NdArray)>,
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.config_hash.to_le_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, value) in &self.params {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(value.ndim() as u32).to_le_bytes());
            for &d in value.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &x in value.data() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(ModelError::Checkpoint("bad magic".into()));
        }
        let version = u16::from_le_bytes(r.array()?);
        if version != VERSION {
            return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
        }
        let config_hash = u64::from_le_bytes(r.array()?);
        let count = u32::from_le_bytes(r.array()?) as usize;
        let mut params = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = u32::from_le_bytes(r.array()?) as usize;
            let name = String::from_utf8(r.take(len)?.to_vec())
                .map_err(|_| ModelError::Checkpoint("parameter name is not UTF-8".into()))?;
            let ndim = u32::from_le_bytes(r.array()?) as usize;
            let mut shape = Vec::with_capacity(ndim.min(16));
            for _ in 0..ndim {
                shape.push(u64::from_le_bytes(r.array()?) as usize);
            }
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| ModelError::Checkpoint(format!("{name}: shape overflows")))?;
            let raw = r.take(n.checked_mul(8).ok_or_else(|| ModelError::Checkpoint("payload overflows".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            params.push((name, NdArray::new(&shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(ModelError::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { config_hash, params })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| ModelError::Io(path.display().to_string(), e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| ModelError::Io(path.display().to_string(), e))?;
        Self::decode(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            ModelError::Checkpoint(format!("truncated at byte {} (wanted {n} more)", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], ModelError> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        Checkpoint {
            config_hash: 0xdead_beef_0123_4567,
            params: vec![
                ("a.weight".into(), NdArray::new(&[2, 1, 1, 1, 3], vec![1.0, -0.0, 1e-300, f64::MAX, 0.1, 3.5]).unwrap()),
                ("a.bias".into(), NdArray::new(&[2], vec![0.25, -7.0]).unwrap()),
            ],
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let c = sample();
        let bytes = c.encode();
        let d = Checkpoint::decode(&bytes).unwrap();
        assert_eq!(d.encode(), bytes);
        assert_eq!(d.config_hash, c.config_hash);
        assert!(d.params[0].1.data()[1].is_sign_negative());
    }

    #[test]
    fn header_layout() {
        let bytes = sample().encode();
        assert_eq!(&bytes[..8], b"FSEGCKPT");
        assert_eq!(u16::from_le_bytes([bytes[8], bytes[9]]), 1);
    }

    #[test]
    fn truncation_and_magic() {
        let bytes = sample().encode();
        assert!(Checkpoint::decode(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::decode(&bad).is_err());
        let mut long = bytes;
        long.push(0);
        assert!(Checkpoint::decode(&long).is_err());
    }
}
