//! The `T3B1` binary tensor format.
//!
//! Layout: the ASCII magic `T3B1`, three little-endian `u32` dimensions
//! `I, J, K`, then `I*J*K` little-endian `f64` values in mode-1-fastest
//! order. Matrices are stored as `rows x cols x 1` tensors, which is exactly
//! their column-major buffer.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::{Matrix, Tensor3};

pub const MAGIC: &[u8; 4] = b"T3B1";

pub fn encode_t3b(t: &Tensor3) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * t.numel());
    out.extend_from_slice(MAGIC);
    for d in t.dims() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_t3b(bytes: &[u8], origin: &str) -> Result<Tensor3> {
    let bad = |reason: String| Error::Format {
        path: origin.to_string(),
        reason,
    };
    if bytes.len() < 16 {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("missing T3B1 magic".into()));
    }
    let mut dims = [0usize; 3];
    for (n, d) in dims.iter_mut().enumerate() {
        let off = 4 + 4 * n;
        *d = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    }
    let n = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| bad("dimension product overflows".into()))?;
    let payload = &bytes[16..];
    if payload.len() != 8 * n {
        return Err(bad(format!(
            "dims {dims:?} need {} payload bytes, found {}",
            8 * n,
            payload.len()
        )));
    }
    let data: Vec<f64> = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite value in payload".into()));
    }
    Tensor3::from_vec(dims, data)
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_tensor(path: &Path, t: &Tensor3) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&encode_t3b(t)).map_err(|e| io_err(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor3> {
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| io_err(path, e))?;
    decode_t3b(&bytes, &path.display().to_string())
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let t = Tensor3::from_vec([m.rows(), m.cols(), 1], m.data().to_vec())?;
    write_tensor(path, &t)
}

pub fn read_matrix(path: &Path) -> Result<Matrix> {
    let t = read_tensor(path)?;
    let [r, c, k] = t.dims();
    if k != 1 {
        return Err(Error::Format {
            path: path.display().to_string(),
            reason: format!("expected a matrix (K = 1), found dims {:?}", t.dims()),
        });
    }
    Matrix::from_col_major(r, c, t.into_data())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })?;
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}
