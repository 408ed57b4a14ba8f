//! Binary greyscale (P5) export.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{LrbnError, Result};

/// Encodes one `rows × cols` image given row-major values in `[0, 1]`.
pub fn encode_pgm(pixels: &[f64], rows: usize, cols: usize) -> Result<Vec<u8>> {
    crate::error::check_len("image pixels", rows * cols, pixels.len())?;
    let header = format!("P5\n{cols} {rows}\n255\n");
    let mut out = Vec::with_capacity(header.len() + pixels.len());
    out.extend_from_slice(header.as_bytes());
    for &v in pixels {
        if !(0.0..=1.0).contains(&v) {
            return Err(LrbnError::InvalidValue(format!(
                "pixel value {v} outside [0, 1]"
            )));
        }
        out.push((v * 255.0).round() as u8);
    }
    Ok(out)
}

/// Writes each row of `images` to `dir/<prefix><index>.pgm` and returns the
/// paths. An empty matrix writes nothing.
pub fn write_pgm(
    images: ArrayView2<'_, f64>,
    rows: usize,
    cols: usize,
    dir: impl AsRef<Path>,
    prefix: &str,
) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    let width = images.nrows().to_string().len();
    let mut paths = Vec::with_capacity(images.nrows());
    for (k, img) in images.rows().into_iter().enumerate() {
        let bytes = encode_pgm(&img.to_vec(), rows, cols)?;
        let path = dir.join(format!("{prefix}{k:0width$}.pgm"));
        fs::write(&path, bytes)?;
        paths.push(path);
    }
    Ok(paths)
}

/// Lays images out row by row on a `grid_rows × grid_cols` canvas with a
/// one-pixel mid-grey gutter. Missing cells stay grey.
pub fn tile_grid(
    images: ArrayView2<'_, f64>,
    rows: usize,
    cols: usize,
    grid_rows: usize,
    grid_cols: usize,
) -> Result<Array2<f64>> {
    crate::error::check_len("image pixels", rows * cols, images.ncols())?;
    if images.nrows() > grid_rows * grid_cols {
        return Err(LrbnError::InvalidConfig(format!(
            "{} images do not fit a {grid_rows}x{grid_cols} grid",
            images.nrows()
        )));
    }
    let h = grid_rows * (rows + 1) + 1;
    let w = grid_cols * (cols + 1) + 1;
    let mut canvas = Array2::from_elem((h, w), 0.5);
    for (k, img) in images.rows().into_iter().enumerate() {
        let (gr, gc) = (k / grid_cols, k % grid_cols);
        let (top, left) = (1 + gr * (rows + 1), 1 + gc * (cols + 1));
        for r in 0..rows {
            for c in 0..cols {
                canvas[(top + r, left + c)] = img[r * cols + c];
            }
        }
    }
    Ok(canvas)
}

/// Tiles `images` with [`tile_grid`] and writes one PGM.
pub fn write_pgm_grid(
    images: ArrayView2<'_, f64>,
    rows: usize,
    cols: usize,
    grid_rows: usize,
    grid_cols: usize,
    path: impl AsRef<Path>,
) -> Result<()> {
    let canvas = tile_grid(images, rows, cols, grid_rows, grid_cols)?;
    let (h, w) = canvas.dim();
    let pixels: Vec<f64> = canvas.iter().copied().collect();
    fs::write(path, encode_pgm(&pixels, h, w)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_white_pixel() {
        assert_eq!(
            encode_pgm(&[1.0], 1, 1).unwrap(),
            b"P5\n1 1\n255\n\xff".to_vec()
        );
    }

    #[test]
    fn blank_digit_layout() {
        let bytes = encode_pgm(&[0.0; 784], 28, 28).unwrap();
        let header = b"P5\n28 28\n255\n";
        assert_eq!(&bytes[..header.len()], header);
        assert_eq!(bytes.len(), header.len() + 784);
        assert!(bytes[header.len()..].iter().all(|&b| b == 0));
    }

    #[test]
    fn out_of_range_rejected() {
        assert!(encode_pgm(&[1.5], 1, 1).is_err());
        assert!(encode_pgm(&[-0.1], 1, 1).is_err());
    }
}
