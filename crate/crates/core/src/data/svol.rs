//! SVOL: a minimal binary container for volumes and label masks.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "SVOL"
//! 4       1     version (0x01)
//! 5       1     dtype (0x01 = f32 LE, 0x02 = u8)
//! 6       2     reserved, zero
//! 8       24    Nx, Ny, Nz as u64 LE
//! 32      ...   voxels, row-major with z fastest
//! ```
//!
//! Volumes are stored as `f32`, so a write/read cycle returns the `f32`
//! rounding of the in-memory `f64` values; a second cycle is bit-exact.

use std::fs;
use std::path::Path;

use super::{DataError, Mask, Volume};

pub const MAGIC: &[u8; 4] = b"SVOL";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Dtype {
    F32 = 1,
    U8 = 2,
}

impl Dtype {
    fn from_byte(b: u8) -> Result<Self, DataError> {
        match b {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::U8),
            other => Err(DataError::UnknownDtype(other)),
        }
    }

    fn width(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::U8 => 1,
        }
    }
}

fn header(dtype: Dtype, extents: [usize; 3]) -> Vec<u8> {
    let mut h = Vec::with_capacity(HEADER_LEN);
    h.extend_from_slice(MAGIC);
    h.push(VERSION);
    h.push(dtype as u8);
    h.extend_from_slice(&[0, 0]);
    for e in extents {
        h.extend_from_slice(&(e as u64).to_le_bytes());
    }
    h
}

pub fn encode_volume(v: &Volume) -> Vec<u8> {
    let mut out = header(Dtype::F32, v.extents());
    out.reserve(v.len() * 4);
    for &x in v.data() {
        out.extend_from_slice(&(x as f32).to_le_bytes());
    }
    out
}

pub fn encode_mask(m: &Mask) -> Vec<u8> {
    let mut out = header(Dtype::U8, m.extents());
    out.extend_from_slice(m.labels());
    out
}

fn parse_header(bytes: &[u8], want: Dtype) -> Result<([usize; 3], &[u8]), DataError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(DataError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(DataError::TruncatedHeader { found: bytes.len() });
    }
    if bytes[4] != VERSION {
        return Err(DataError::UnsupportedVersion(bytes[4]));
    }
    let dtype = Dtype::from_byte(bytes[5])?;
    if dtype != want {
        return Err(DataError::DtypeMismatch {
            expected: want as u8,
            found: dtype as u8,
        });
    }
    if bytes[6..8] != [0, 0] {
        return Err(DataError::ReservedBytes);
    }
    let mut extents = [0usize; 3];
    for (i, e) in extents.iter_mut().enumerate() {
        let raw = u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().expect("8 bytes"));
        *e = usize::try_from(raw).map_err(|_| DataError::Extent { axis: i, extent: usize::MAX })?;
    }
    let expected = extents
        .iter()
        .try_fold(dtype.width(), |acc, &e| acc.checked_mul(e))
        .ok_or(DataError::Extent { axis: 0, extent: usize::MAX })?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() < expected {
        return Err(DataError::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    if payload.len() > expected {
        return Err(DataError::TrailingBytes {
            extra: payload.len() - expected,
        });
    }
    Ok((extents, payload))
}

pub fn decode_volume(bytes: &[u8]) -> Result<Volume, DataError> {
    let (extents, payload) = parse_header(bytes, Dtype::F32)?;
    let data = payload
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    Volume::new(extents, data)
}

pub fn decode_mask(bytes: &[u8]) -> Result<Mask, DataError> {
    let (extents, payload) = parse_header(bytes, Dtype::U8)?;
    Mask::new(extents, payload.to_vec())
}

pub fn write_volume(path: impl AsRef<Path>, v: &Volume) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, encode_volume(v)).map_err(|e| DataError::io(path, e))
}

pub fn write_mask(path: impl AsRef<Path>, m: &Mask) -> Result<(), DataError> {
    let path = path.as_ref();
    fs::write(path, encode_mask(m)).map_err(|e| DataError::io(path, e))
}

pub fn read_volume(path: impl AsRef<Path>) -> Result<Volume, DataError> {
    let path = path.as_ref();
    decode_volume(&fs::read(path).map_err(|e| DataError::io(path, e))?)
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<Mask, DataError> {
    let path = path.as_ref();
    decode_mask(&fs::read(path).map_err(|e| DataError::io(path, e))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Volume {
        let data = (0..512).map(|i| f64::from((i as f32 * 0.37).sin())).collect();
        Volume::new([8, 8, 8], data).unwrap()
    }

    #[test]
    fn header_layout() {
        let bytes = encode_volume(&Volume::filled([2, 3, 4], 1.0).unwrap());
        assert_eq!(&bytes[..8], b"SVOL\x01\x01\x00\x00");
        assert_eq!(u64::from_le_bytes(bytes[16..24].try_into().unwrap()), 3);
        assert_eq!(bytes.len(), 32 + 24 * 4);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode_volume(&sample());
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(decode_volume(&bytes), Err(DataError::BadMagic)));
    }

    #[test]
    fn truncated_payload() {
        let bytes = encode_volume(&sample());
        let short = &bytes[..bytes.len() - 7 * 4];
        assert!(matches!(
            decode_volume(short),
            Err(DataError::TruncatedPayload { expected: 2048, found: 2020 })
        ));
    }

    #[test]
    fn trailing_bytes() {
        let mut bytes = encode_mask(&Mask::empty([2, 2, 2]).unwrap());
        bytes.push(0);
        assert!(matches!(decode_mask(&bytes), Err(DataError::TrailingBytes { extra: 1 })));
    }

    #[test]
    fn dtype_mismatch() {
        let bytes = encode_mask(&Mask::empty([2, 2, 2]).unwrap());
        assert!(matches!(
            decode_volume(&bytes),
            Err(DataError::DtypeMismatch { expected: 1, found: 2 })
        ));
    }

    #[test]
    fn version_checked() {
        let mut bytes = encode_mask(&Mask::empty([2, 2, 2]).unwrap());
        bytes[4] = 9;
        assert!(matches!(decode_mask(&bytes), Err(DataError::UnsupportedVersion(9))));
    }
}
