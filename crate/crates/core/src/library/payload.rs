use std::fs;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TRAJECTORY_MAGIC: &[u8; 8] = b"CCFTRAJ1";
const HEADER_LEN: usize = 16;

/// `CCFTRAJ1 | u32 rows | u32 cols | rows·cols little-endian f64`.
pub fn encode_payload(samples: &Array2<f64>) -> Result<Vec<u8>> {
    let (rows, cols) = samples.dim();
    let rows32 = u32::try_from(rows).map_err(|_| Error::arg("too many rows for payload"))?;
    let cols32 = u32::try_from(cols).map_err(|_| Error::arg("too many columns for payload"))?;
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * rows * cols);
    out.extend_from_slice(TRAJECTORY_MAGIC);
    out.extend_from_slice(&rows32.to_le_bytes());
    out.extend_from_slice(&cols32.to_le_bytes());
    for v in samples.iter() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_payload(bytes: &[u8], file: &Path) -> Result<Array2<f64>> {
    let fail = |reason: String| Error::Load {
        file: file.to_path_buf(),
        reason,
    };
    if bytes.len() < HEADER_LEN {
        return Err(fail(format!("truncated header ({} bytes)", bytes.len())));
    }
    if &bytes[..8] != TRAJECTORY_MAGIC {
        return Err(fail("bad magic, expected CCFTRAJ1".into()));
    }
    let rows = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let cols = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or_else(|| fail("shape overflows".into()))?;
    if bytes.len() != expected {
        return Err(fail(format!(
            "payload of {} bytes does not match shape {rows}x{cols} ({expected} bytes)",
            bytes.len()
        )));
    }
    let data: Vec<f64> = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| fail(e.to_string()))
}

pub fn write_payload(path: &Path, samples: &Array2<f64>) -> Result<String> {
    let bytes = encode_payload(samples)?;
    fs::write(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn read_payload(path: &Path) -> Result<Array2<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::Load {
        file: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    decode_payload(&bytes, path)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
