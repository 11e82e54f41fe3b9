//! Binary matrix container.
//!
//! Layout: the magic bytes `PDNN`, a little-endian `u16` version, `u32` row and
//! column counts, then `rows * cols` little-endian `f64` values in
//! column-major order. Reading back is bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"PDNN";
pub const VERSION: u16 = 1;
const HEADER_LEN: usize = 4 + 2 + 4 + 4;

pub fn encode_matrix(m: &DMatrix<f64>) -> Result<Vec<u8>> {
    let rows = u32::try_from(m.nrows()).map_err(|_| Error::Format("too many rows".into()))?;
    let cols = u32::try_from(m.ncols()).map_err(|_| Error::Format("too many columns".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * m.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&rows.to_le_bytes());
    out.extend_from_slice(&cols.to_le_bytes());
    for v in m.as_slice() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<DMatrix<f64>> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing PDNN header".into()));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported container version {version}")));
    }
    let rows = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
    let payload = &bytes[HEADER_LEN..];
    let expected = rows.checked_mul(cols).and_then(|n| n.checked_mul(8));
    if expected != Some(payload.len()) {
        return Err(Error::Format(format!("{rows}x{cols} matrix needs {expected:?} bytes, found {}", payload.len())));
    }
    let values = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    Ok(DMatrix::from_vec(rows, cols, values))
}

pub fn write_matrix<W: Write>(m: &DMatrix<f64>, mut w: W) -> Result<()> {
    w.write_all(&encode_matrix(m)?)?;
    Ok(())
}

pub fn read_matrix<R: Read>(mut r: R) -> Result<DMatrix<f64>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode_matrix(&bytes)
}

pub fn save_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    std::fs::write(path, encode_matrix(m)?)?;
    Ok(())
}

pub fn load_matrix(path: &Path) -> Result<DMatrix<f64>> {
    decode_matrix(&std::fs::read(path)?)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, -0.0, f64::MIN_POSITIVE, 1e308, -3.25, 0.1]);
        let back = decode_matrix(&encode_matrix(&m).unwrap()).unwrap();
        assert_eq!(m.shape(), back.shape());
        assert!(m.iter().zip(back.iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn header_layout() {
        let bytes = encode_matrix(&DMatrix::from_column_slice(2, 1, &[1.0, 2.0])).unwrap();
        assert_eq!(&bytes[..4], b"PDNN");
        assert_eq!(&bytes[4..6], &[1, 0]);
        assert_eq!(&bytes[6..10], &[2, 0, 0, 0]);
        assert_eq!(&bytes[10..14], &[1, 0, 0, 0]);
        assert_eq!(&bytes[14..22], &1.0f64.to_le_bytes());
        assert_eq!(bytes.len(), 30);
    }

    #[test]
    fn empty_matrix() {
        let m = DMatrix::<f64>::zeros(0, 4);
        assert_eq!(decode_matrix(&encode_matrix(&m).unwrap()).unwrap().shape(), (0, 4));
    }

    #[test]
    fn corrupt_input_is_rejected() {
        let mut bytes = encode_matrix(&DMatrix::from_element(2, 2, 1.0)).unwrap();
        assert!(decode_matrix(&bytes[..bytes.len() - 1]).is_err());
        bytes[0] = b'X';
        assert!(decode_matrix(&bytes).is_err());
        assert!(decode_matrix(b"PD").is_err());
    }

    #[test]
    fn digest_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }
}
