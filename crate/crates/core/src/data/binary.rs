//! `HTHC` binary matrix format.
//!
//! Layout (little endian): magic `HTHC`, version `u8`, `d: u64`, `n: u64`,
//! dtype tag `u8` (0 = f32, 1 = f64), then `d*n` scalars column-major.

use std::fs;
use std::path::Path;

use crate::data::DataMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"HTHC";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 4 + 1 + 8 + 8 + 1;

pub fn encode_binary<F: Scalar>(m: &DataMatrix<F>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + m.values().len() * F::BYTES);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(m.d() as u64).to_le_bytes());
    out.extend_from_slice(&(m.n() as u64).to_le_bytes());
    out.push(F::DTYPE);
    for &v in m.values() {
        v.write_le(&mut out);
    }
    out
}

pub fn save_binary<F: Scalar>(m: &DataMatrix<F>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_binary(m))?;
    Ok(())
}

/// Decodes a matrix, converting the stored precision to `F` if it differs.
pub fn decode_binary<F: Scalar>(bytes: &[u8]) -> Result<DataMatrix<F>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Format(format!(
            "file has {} bytes, header needs {HEADER_LEN}",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(Error::Format("bad magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", bytes[4])));
    }
    let d = u64::from_le_bytes(bytes[5..13].try_into().unwrap());
    let n = u64::from_le_bytes(bytes[13..21].try_into().unwrap());
    let dtype = bytes[21];
    let payload = &bytes[HEADER_LEN..];
    let count = usize::try_from(d.checked_mul(n).ok_or_else(|| Error::Format("d*n overflows".into()))?)
        .map_err(|_| Error::Format("d*n overflows".into()))?;

    let values: Vec<F> = match dtype {
        0 => read_payload::<f32, F>(payload, count)?,
        1 => read_payload::<f64, F>(payload, count)?,
        t => return Err(Error::Format(format!("unknown dtype tag {t}"))),
    };
    DataMatrix::new(d as usize, n as usize, values)
        .map_err(|e| Error::Format(e.to_string()))
}

pub fn load_binary<F: Scalar>(path: impl AsRef<Path>) -> Result<DataMatrix<F>> {
    decode_binary(&fs::read(path)?)
}

fn read_payload<S: Scalar, F: Scalar>(payload: &[u8], count: usize) -> Result<Vec<F>> {
    let need = count
        .checked_mul(S::BYTES)
        .ok_or_else(|| Error::Format("payload size overflows".into()))?;
    if payload.len() < need {
        return Err(Error::Format(format!(
            "truncated payload: expected {need} bytes, found {}",
            payload.len()
        )));
    }
    if payload.len() > need {
        return Err(Error::Format(format!(
            "{} trailing bytes after payload",
            payload.len() - need
        )));
    }
    Ok(payload
        .chunks_exact(S::BYTES)
        .map(|b| F::from_f64(S::read_le(b).as_f64()))
        .collect())
}
