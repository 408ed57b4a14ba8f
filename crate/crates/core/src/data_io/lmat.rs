//! Headered raw matrices for corpora that do not ship as IDX.
//!
//! Layout, all little-endian: `"LMAT"`, u32 version, u8 kind (0 binary,
//! 1 real), u64 rows, u64 columns, u8 label flag, then the payload (one u8
//! per entry for binary, f64 for real) and, if flagged, one u32 label per
//! row.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{DataKind, Dataset};
use crate::error::{LrbnError, Result};

pub const LMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"LMAT";
const HEADER: usize = 4 + 4 + 1 + 8 + 8 + 1;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or(LrbnError::Truncated("LMAT payload"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}

pub fn parse_lmat(bytes: &[u8]) -> Result<Dataset> {
    if bytes.len() < HEADER {
        return Err(LrbnError::Truncated("LMAT header"));
    }
    if &bytes[..4] != MAGIC {
        return Err(LrbnError::BadMagic {
            expected: "LMAT".into(),
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    let mut c = Cursor { bytes, pos: 4 };
    let version = u32::from_le_bytes(c.take(4)?.try_into().unwrap());
    if version != LMAT_VERSION {
        return Err(LrbnError::VersionMismatch {
            found: version,
            supported: LMAT_VERSION,
        });
    }
    let kind = match c.take(1)?[0] {
        0 => DataKind::Binary,
        1 => DataKind::Real,
        k => return Err(LrbnError::InvalidValue(format!("LMAT kind byte {k}"))),
    };
    let rows = u64::from_le_bytes(c.take(8)?.try_into().unwrap());
    let cols = u64::from_le_bytes(c.take(8)?.try_into().unwrap());
    let has_labels = c.take(1)?[0] != 0;
    let too_big = || LrbnError::DimOverflow(format!("{rows}x{cols}"));
    let rows = usize::try_from(rows).map_err(|_| too_big())?;
    let cols = usize::try_from(cols).map_err(|_| too_big())?;
    let n = rows.checked_mul(cols).ok_or_else(too_big)?;
    let values: Vec<f64> = match kind {
        DataKind::Binary => c.take(n)?.iter().map(|&b| f64::from(b)).collect(),
        DataKind::Real => c
            .take(n.checked_mul(8).ok_or_else(too_big)?)?
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect(),
    };
    let labels = if has_labels {
        Some(
            c.take(rows.checked_mul(4).ok_or_else(too_big)?)?
                .chunks_exact(4)
                .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
                .collect(),
        )
    } else {
        None
    };
    if c.pos != bytes.len() {
        return Err(LrbnError::DimensionInconsistency(format!(
            "{} bytes after LMAT payload",
            bytes.len() - c.pos
        )));
    }
    let samples = Array2::from_shape_vec((rows, cols), values).expect("length checked");
    Dataset::new(samples, kind, labels)
}

pub fn write_lmat(ds: &Dataset) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER + ds.samples.len() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&LMAT_VERSION.to_le_bytes());
    out.push(match ds.kind {
        DataKind::Binary => 0,
        DataKind::Real => 1,
    });
    out.extend_from_slice(&(ds.samples.nrows() as u64).to_le_bytes());
    out.extend_from_slice(&(ds.samples.ncols() as u64).to_le_bytes());
    out.push(u8::from(ds.labels.is_some()));
    for &v in ds.samples.iter() {
        match ds.kind {
            DataKind::Binary => {
                if v != 0.0 && v != 1.0 {
                    return Err(LrbnError::InvalidValue(format!(
                        "binary dataset contains {v}"
                    )));
                }
                out.push(v as u8);
            }
            DataKind::Real => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    if let Some(labels) = &ds.labels {
        for &l in labels {
            let l = u32::try_from(l).map_err(|_| LrbnError::InvalidValue(format!("label {l}")))?;
            out.extend_from_slice(&l.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn load_lmat(path: impl AsRef<Path>) -> Result<Dataset> {
    parse_lmat(&fs::read(path)?)
}

pub fn save_lmat(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, write_lmat(ds)?)?;
    Ok(())
}
