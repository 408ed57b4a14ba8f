//! IDX tensors of unsigned bytes.

use std::fs;
use std::path::Path;

use crate::error::{LrbnError, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

const U8_TYPE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxTensor {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxTensor {
    /// Samples along the first axis, each flattened row-major.
    pub fn samples(&self) -> impl Iterator<Item = &[u8]> {
        let per = self.dims[1..].iter().product::<usize>().max(1);
        self.data.chunks_exact(per)
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(LrbnError::Truncated("IDX header"))
}

pub fn parse_idx(bytes: &[u8]) -> Result<IdxTensor> {
    let magic = be_u32(bytes, 0)?;
    let [z0, z1, ty, rank] = magic.to_be_bytes();
    if z0 != 0 || z1 != 0 || ty != U8_TYPE || rank == 0 {
        return Err(LrbnError::BadMagic {
            expected: format!("{IDX_IMAGES_MAGIC:#010x} or {IDX_LABELS_MAGIC:#010x}"),
            found: format!("{magic:#010x}"),
        });
    }
    let rank = usize::from(rank);
    let mut dims = Vec::with_capacity(rank);
    for k in 0..rank {
        dims.push(be_u32(bytes, 4 + 4 * k)? as usize);
    }
    let size = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| LrbnError::DimOverflow(format!("{dims:?}")))?;
    let start = 4 + 4 * rank;
    let payload = &bytes[start..];
    if payload.len() < size {
        return Err(LrbnError::Truncated("IDX payload"));
    }
    if payload.len() > size {
        log::warn!(
            "ignoring {} trailing bytes after IDX payload",
            payload.len() - size
        );
    }
    Ok(IdxTensor {
        dims,
        data: payload[..size].to_vec(),
    })
}

pub fn load_idx(path: impl AsRef<Path>) -> Result<IdxTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| {
        LrbnError::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    parse_idx(&bytes)
}

/// Serialises a u8 tensor; the inverse of [`parse_idx`].
pub fn write_idx(tensor: &IdxTensor) -> Result<Vec<u8>> {
    let rank = u8::try_from(tensor.dims.len())
        .map_err(|_| LrbnError::DimOverflow(format!("rank {}", tensor.dims.len())))?;
    let size: usize = tensor.dims.iter().product();
    crate::error::check_len("IDX payload", size, tensor.data.len())?;
    let mut out = Vec::with_capacity(4 + 4 * tensor.dims.len() + size);
    out.extend_from_slice(&[0, 0, U8_TYPE, rank]);
    for &d in &tensor.dims {
        let d = u32::try_from(d).map_err(|_| LrbnError::DimOverflow(format!("dimension {d}")))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(&tensor.data);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn images_header() {
        let mut bytes = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28];
        bytes.extend(std::iter::repeat_n(7, 1568));
        let t = parse_idx(&bytes).unwrap();
        assert_eq!(t.dims, vec![2, 28, 28]);
        let s: Vec<_> = t.samples().collect();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].len(), 784);
    }

    #[test]
    fn labels_and_errors() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 5, 1, 2, 3, 4, 5];
        assert_eq!(parse_idx(&bytes).unwrap().data, vec![1, 2, 3, 4, 5]);
        let err = parse_idx(&bytes[..11]).unwrap_err();
        assert!(err.to_string().contains("truncated"));
        assert!(matches!(
            parse_idx(&[0, 0, 9, 1, 0, 0, 0, 0]),
            Err(LrbnError::BadMagic { .. })
        ));
        let huge = [
            0, 0, 8, 3, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255, 255,
        ];
        if usize::BITS == 64 {
            assert!(matches!(parse_idx(&huge), Err(LrbnError::DimOverflow(_))));
        }
    }
}
