//! `EmbeddingMatrix` and the EMB1 binary file format.
//!
//! Layout (all integers little-endian `u32`):
//!
//! | bytes  | content                                   |
//! |--------|-------------------------------------------|
//! | 0..4   | ASCII `EMB1`                              |
//! | 4..8   | format version, always 1                  |
//! | 8..12  | rows                                      |
//! | 12..16 | dims                                      |
//! | 16..   | rows × dims `f32` LE values, row-major    |

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{AuditError, Result};
use crate::stats::CompensatedSum;

pub const MAGIC: &[u8; 4] = b"EMB1";
pub const FORMAT_VERSION: u32 = 1;
pub const HEADER_LEN: usize = 16;

/// Rows whose norm is already this close to 1 are left untouched by
/// [`EmbeddingMatrix::l2_normalize`].
const UNIT_NORM_SLACK: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dims: usize,
    data: Vec<f32>,
    normalized: bool,
}

impl EmbeddingMatrix {
    pub fn new(rows: usize, dims: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || dims == 0 {
            return Err(AuditError::Shape(format!(
                "matrix must have rows >= 1 and dims >= 1 (got {rows}x{dims})"
            )));
        }
        let expected = rows
            .checked_mul(dims)
            .ok_or_else(|| AuditError::Shape(format!("{rows}x{dims} overflows")))?;
        if data.len() != expected {
            return Err(AuditError::Shape(format!(
                "data length {} != rows*dims {}",
                data.len(),
                expected
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(AuditError::NonFinite {
                row: pos / dims,
                col: pos % dims,
            });
        }
        Ok(Self {
            rows,
            dims,
            data,
            normalized: false,
        })
    }

    pub fn from_rows<R: AsRef<[f32]>>(rows: &[R]) -> Result<Self> {
        let dims = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * dims);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dims {
                return Err(AuditError::Shape(format!(
                    "row {i} has {} values, expected {dims}",
                    r.len()
                )));
            }
            data.extend_from_slice(r);
        }
        Self::new(rows.len(), dims, data)
    }

    /// Builds a matrix from 64-bit rows, rounding each value to `f32`.
    pub fn from_f64_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let converted: Vec<Vec<f32>> = rows
            .iter()
            .map(|r| r.as_ref().iter().map(|&v| v as f32).collect())
            .collect();
        Self::from_rows(&converted)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dims..(i + 1) * self.dims]
    }

    pub fn get_row(&self, i: usize) -> Result<&[f32]> {
        if i >= self.rows {
            return Err(AuditError::OutOfRange {
                what: "row",
                value: i,
                max: self.rows - 1,
            });
        }
        Ok(self.row(i))
    }

    /// Row widened to `f64`.
    pub fn row_f64(&self, i: usize) -> Vec<f64> {
        self.row(i).iter().map(|&v| f64::from(v)).collect()
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.dims)
    }

    /// Bitwise equality, distinguishing `0.0` from `-0.0`.
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.dims == other.dims
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// Scales every row to unit Euclidean norm.
    ///
    /// Norms are computed in `f64`. A row already within `1e-7` of unit norm
    /// is copied unchanged, which makes the operation idempotent on its own
    /// output.
    pub fn l2_normalize(&self) -> Result<Self> {
        if self.normalized {
            return Ok(self.clone());
        }
        let mut data = Vec::with_capacity(self.data.len());
        for (i, row) in self.iter_rows().enumerate() {
            let norm = l2_norm(row);
            if norm == 0.0 {
                return Err(AuditError::DegenerateVector { row: Some(i) });
            }
            if (norm - 1.0).abs() < UNIT_NORM_SLACK {
                data.extend_from_slice(row);
            } else {
                data.extend(row.iter().map(|&v| (f64::from(v) / norm) as f32));
            }
        }
        Ok(Self {
            rows: self.rows,
            dims: self.dims,
            data,
            normalized: true,
        })
    }

    /// Serializes to EMB1 bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.rows as u32).to_le_bytes());
        out.extend_from_slice(&(self.dims as u32).to_le_bytes());
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Parses EMB1 bytes.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(AuditError::Format(format!(
                "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
                bytes.len()
            )));
        }
        if &bytes[0..4] != MAGIC {
            return Err(AuditError::Format(format!(
                "bad magic {:?}, expected \"EMB1\"",
                String::from_utf8_lossy(&bytes[0..4])
            )));
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
        let version = word(4);
        if version != FORMAT_VERSION {
            return Err(AuditError::Format(format!(
                "unsupported version {version}"
            )));
        }
        let rows = word(8) as usize;
        let dims = word(12) as usize;
        if rows == 0 || dims == 0 {
            return Err(AuditError::Format(format!(
                "header declares an empty matrix ({rows}x{dims})"
            )));
        }
        let expected = rows
            .checked_mul(dims)
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| AuditError::Format(format!("{rows}x{dims} overflows")))?;
        let payload = &bytes[HEADER_LEN..];
        if payload.len() < expected {
            return Err(AuditError::Truncated {
                expected,
                actual: payload.len(),
            });
        }
        if payload.len() > expected {
            return Err(AuditError::Format(format!(
                "{} trailing bytes after payload",
                payload.len() - expected
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        EmbeddingMatrix::new(rows, dims, data)
    }

    /// Parses the plain-text matrix form: a first line holding `dims`, then
    /// one comma-separated row per line. Blank lines are skipped.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
        let header = lines
            .next()
            .ok_or_else(|| AuditError::Format("empty CSV matrix".into()))?;
        let dims: usize = header
            .parse()
            .map_err(|_| AuditError::Format(format!("CSV header {header:?} is not a dims count")))?;
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let row = line
                .split(',')
                .map(|f| {
                    f.trim()
                        .parse::<f32>()
                        .map_err(|_| AuditError::Format(format!("row {i}: bad value {f:?}")))
                })
                .collect::<Result<Vec<f32>>>()?;
            if row.len() != dims {
                return Err(AuditError::Shape(format!(
                    "row {i} has {} values, header says {dims}",
                    row.len()
                )));
            }
            rows.push(row);
        }
        Self::from_rows(&rows)
    }
}

pub fn l2_norm(v: &[f32]) -> f64 {
    v.iter()
        .map(|&x| f64::from(x) * f64::from(x))
        .collect::<CompensatedSum>()
        .value()
        .sqrt()
}

pub fn load_matrix(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| AuditError::io(path, e))?;
    EmbeddingMatrix::from_bytes(&bytes)
}

pub fn load_matrix_csv(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| AuditError::io(path, e))?;
    EmbeddingMatrix::from_csv_str(&text)
}

/// Writes `m` atomically: the bytes go to a sibling temp file which is then
/// renamed over `path`.
pub fn save_matrix(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_atomic(path, &m.to_bytes())
}

/// Writes `bytes` to a sibling temp file, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp_name = path
        .file_name()
        .ok_or_else(|| AuditError::Format(format!("{} has no file name", path.display())))?
        .to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        AuditError::io(path, e)
    })
}
