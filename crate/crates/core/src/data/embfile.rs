//! `EMBD` embedding files.
//!
//! ```text
//! offset  size     field
//! 0       4        magic "EMBD"
//! 4       4        version, u32 LE (currently 1)
//! 8       4        row count n, u32 LE
//! 12      4        dimension d, u32 LE (must be ≥ 1)
//! 16      4·n·d    values, f32 LE, row-major
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkernel::Matrix;

pub const EMBEDDING_MAGIC: [u8; 4] = *b"EMBD";
pub const EMBEDDING_VERSION: u32 = 1;
pub const EMBEDDING_HEADER_LEN: usize = 16;

pub fn encode_embeddings(m: &Matrix) -> Result<Vec<u8>> {
    if m.cols() == 0 {
        return Err(Error::Format("embedding dimension must be at least 1".into()));
    }
    m.ensure_finite("embeddings")?;
    let count = u32::try_from(m.rows())
        .map_err(|_| Error::Format("too many rows for an EMBD file".into()))?;
    let dim = u32::try_from(m.cols())
        .map_err(|_| Error::Format("dimension too large for an EMBD file".into()))?;
    let mut out = Vec::with_capacity(EMBEDDING_HEADER_LEN + 4 * m.data().len());
    out.extend_from_slice(&EMBEDDING_MAGIC);
    out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    for v in m.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<Matrix> {
    if bytes.len() < 4 || bytes[..4] != EMBEDDING_MAGIC {
        return Err(Error::Format("missing EMBD magic".into()));
    }
    if bytes.len() < EMBEDDING_HEADER_LEN {
        return Err(Error::Corruption("EMBD header is truncated".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
    let version = word(4);
    if version != EMBEDDING_VERSION {
        return Err(Error::Version {
            found: version,
            expected: EMBEDDING_VERSION,
        });
    }
    let (count, dim) = (word(8) as usize, word(12) as usize);
    if dim == 0 {
        return Err(Error::Format("EMBD header declares dimension 0".into()));
    }
    let payload = &bytes[EMBEDDING_HEADER_LEN..];
    let expected = count
        .checked_mul(dim)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::Format("EMBD header sizes overflow".into()))?;
    if payload.len() != expected {
        return Err(Error::Corruption(format!(
            "EMBD payload holds {} bytes, header implies {expected} ({count}x{dim})",
            payload.len()
        )));
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let m = Matrix::from_vec(count, dim, data)?;
    m.ensure_finite("EMBD payload")?;
    Ok(m)
}

pub fn save_embeddings(m: &Matrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_embeddings(m)?).map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<Matrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_embeddings(&bytes).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Corruption(m) => Error::Corruption(format!("{}: {m}", path.display())),
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}
