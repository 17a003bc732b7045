//! Binary embedding file layout (all integers little-endian):
//!
//! | offset | size | field                               |
//! |--------|------|-------------------------------------|
//! | 0      | 4    | magic `b"MMEB"`                     |
//! | 4      | 4    | format version, u32 (currently 1)   |
//! | 8      | 1    | modality code, ASCII `T`/`O`/`A`/`V`|
//! | 9      | 4    | rows, u32                           |
//! | 13     | 4    | cols, u32                           |
//! | 17     | 4·rows·cols | row-major f32 payload        |

use std::fs;
use std::path::Path;

use ndarray::Array2;
use thiserror::Error;

use super::StoreError;
use crate::ModalityKind;

pub const EMBEDDING_MAGIC: [u8; 4] = *b"MMEB";
pub const EMBEDDING_VERSION: u32 = 1;
pub const EMBEDDING_HEADER_LEN: usize = 17;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic bytes {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported embedding format version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown modality code byte {0:#04x}")]
    UnknownModality(u8),
    #[error("file too short: need {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
}

/// One modality's embedding for one video.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub modality: ModalityKind,
    pub data: Array2<f32>,
}

impl EmbeddingMatrix {
    pub fn new(modality: ModalityKind, data: Array2<f32>) -> Self {
        Self { modality, data }
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }
}

pub fn encode_embedding(matrix: &EmbeddingMatrix) -> Vec<u8> {
    let (rows, cols) = matrix.data.dim();
    let mut out = Vec::with_capacity(EMBEDDING_HEADER_LEN + 4 * rows * cols);
    out.extend_from_slice(&EMBEDDING_MAGIC);
    out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    out.push(matrix.modality.code() as u8);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in matrix.data.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn decode_embedding(bytes: &[u8]) -> Result<EmbeddingMatrix, FormatError> {
    if bytes.len() < EMBEDDING_HEADER_LEN {
        return Err(FormatError::Truncated {
            expected: EMBEDDING_HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != EMBEDDING_MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = u32_at(bytes, 4);
    if version != EMBEDDING_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let modality = ModalityKind::from_code(bytes[8] as char)
        .map_err(|_| FormatError::UnknownModality(bytes[8]))?;
    let rows = u32_at(bytes, 9) as usize;
    let cols = u32_at(bytes, 13) as usize;
    let expected = EMBEDDING_HEADER_LEN + 4 * rows * cols;
    if bytes.len() < expected {
        return Err(FormatError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(FormatError::TrailingBytes(bytes.len() - expected));
    }
    let values: Vec<f32> = bytes[EMBEDDING_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let data = Array2::from_shape_vec((rows, cols), values).expect("payload length checked");
    Ok(EmbeddingMatrix { modality, data })
}

pub fn write_embedding(path: &Path, matrix: &EmbeddingMatrix) -> Result<(), StoreError> {
    fs::write(path, encode_embedding(matrix)).map_err(|e| StoreError::io(path, e))
}

pub fn read_embedding(path: &Path) -> Result<EmbeddingMatrix, StoreError> {
    let bytes = fs::read(path).map_err(|e| StoreError::io(path, e))?;
    decode_embedding(&bytes).map_err(|source| StoreError::Format {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    #[test]
    fn header_layout_is_bit_exact() {
        let m = EmbeddingMatrix::new(ModalityKind::Audio, array![[1.0f32, -2.5]]);
        let bytes = encode_embedding(&m);
        assert_eq!(&bytes[0..4], b"MMEB");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(bytes[8], b'A');
        assert_eq!(&bytes[9..13], &[1, 0, 0, 0]);
        assert_eq!(&bytes[13..17], &[2, 0, 0, 0]);
        assert_eq!(&bytes[17..21], &1.0f32.to_le_bytes());
        assert_eq!(&bytes[21..25], &(-2.5f32).to_le_bytes());
        assert_eq!(bytes.len(), 25);
    }

    #[test]
    fn rejects_corrupt_headers() {
        let m = EmbeddingMatrix::new(ModalityKind::Video, Array2::zeros((2, 3)));
        let mut bytes = encode_embedding(&m);
        assert_eq!(
            decode_embedding(&bytes[..20]),
            Err(FormatError::Truncated {
                expected: 41,
                found: 20
            })
        );
        bytes.push(0);
        assert_eq!(decode_embedding(&bytes), Err(FormatError::TrailingBytes(1)));
        bytes.pop();
        bytes[8] = b'X';
        assert_eq!(decode_embedding(&bytes), Err(FormatError::UnknownModality(b'X')));
        bytes[0] = b'Z';
        assert!(matches!(decode_embedding(&bytes), Err(FormatError::BadMagic(_))));
    }

    proptest! {
        #[test]
        fn encode_decode_round_trips(rows in 0usize..5, cols in 0usize..7, seed in any::<u32>(), code in 0usize..4) {
            let data = Array2::from_shape_fn((rows, cols), |(r, c)| {
                (seed as f32) * 0.001 + (r * 31 + c) as f32 * -0.37
            });
            let m = EmbeddingMatrix::new(ModalityKind::ALL[code], data);
            let back = decode_embedding(&encode_embedding(&m)).unwrap();
            prop_assert_eq!(back, m);
        }
    }
}
