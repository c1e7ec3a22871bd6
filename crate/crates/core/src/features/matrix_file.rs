//! Little-endian float matrix files: 4-byte magic, `u32` version,
//! `u32` frames, `u32` dim, then `frames * dim` `f32` values, row-major.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::numcore::{Scalar, Tensor};

pub const CONTENT_MAGIC: &[u8; 4] = b"COMF";
pub const MEL_MAGIC: &[u8; 4] = b"COMM";
const VERSION: u32 = 1;

/// Serialises a `[frames, dim]` tensor.
pub fn encode_matrix(magic: &[u8; 4], m: &Tensor) -> Result<Vec<u8>> {
    let (frames, dim) = m.dims2("matrix file")?;
    let mut out = Vec::with_capacity(16 + 4 * m.len());
    out.extend_from_slice(magic);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(frames as u32).to_le_bytes());
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for &v in m.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_matrix(magic: &[u8; 4], bytes: &[u8]) -> Result<Tensor> {
    let kind = if magic == CONTENT_MAGIC { "feature" } else { "matrix" };
    let bad = |reason: String| Error::Format { kind, reason };
    if bytes.len() < 16 {
        return Err(bad(format!("header needs 16 bytes, got {}", bytes.len())));
    }
    if &bytes[..4] != magic {
        return Err(bad(format!(
            "magic {:?}, expected {:?}",
            String::from_utf8_lossy(&bytes[..4]),
            String::from_utf8_lossy(magic)
        )));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let (frames, dim) = (word(8) as usize, word(12) as usize);
    if frames == 0 || dim == 0 {
        return Err(bad(format!("empty matrix {frames}x{dim}")));
    }
    let body = &bytes[16..];
    if body.len() != frames * dim * 4 {
        return Err(bad(format!(
            "{frames}x{dim} needs {} payload bytes, got {}",
            frames * dim * 4,
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as Scalar)
        .collect();
    Tensor::new(&[frames, dim], data)
}

pub fn write_matrix(path: &Path, magic: &[u8; 4], m: &Tensor) -> Result<()> {
    let bytes = encode_matrix(magic, m)?;
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

pub fn read_matrix(path: &Path, magic: &[u8; 4]) -> Result<Tensor> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    decode_matrix(magic, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let m = Tensor::new(&[2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.5]).unwrap();
        let b = encode_matrix(CONTENT_MAGIC, &m).unwrap();
        assert_eq!(&b[..4], b"COMF");
        assert_eq!(&b[4..8], &1u32.to_le_bytes());
        assert_eq!(&b[8..12], &2u32.to_le_bytes());
        assert_eq!(&b[12..16], &3u32.to_le_bytes());
        assert_eq!(&b[16..20], &1.0f32.to_le_bytes());
        assert_eq!(b.len(), 16 + 24);
        assert_eq!(decode_matrix(CONTENT_MAGIC, &b).unwrap(), m);
    }

    #[test]
    fn malformed_inputs() {
        let m = Tensor::ones(&[2, 2]);
        let b = encode_matrix(CONTENT_MAGIC, &m).unwrap();
        assert!(decode_matrix(MEL_MAGIC, &b).is_err());
        assert!(decode_matrix(CONTENT_MAGIC, &b[..10]).is_err());
        assert!(decode_matrix(CONTENT_MAGIC, &b[..b.len() - 1]).is_err());
        let mut v2 = b.clone();
        v2[4] = 2;
        assert!(decode_matrix(CONTENT_MAGIC, &v2).is_err());
    }
}
