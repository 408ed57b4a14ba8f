//! Dataset ingestion, preprocessing, validation splits and image export.

mod idx;
mod lmat;
mod pgm;

pub use idx::{load_idx, parse_idx, write_idx, IdxTensor, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use lmat::{load_lmat, parse_lmat, save_lmat, write_lmat, LMAT_VERSION};
pub use pgm::{encode_pgm, tile_grid, write_pgm, write_pgm_grid};

use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;

use crate::error::{LrbnError, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataKind {
    Binary,
    Real,
}

/// Mean and population standard deviation of one column before
/// normalisation. A zero `stddev` marks a constant column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnStats {
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Array2<f64>,
    pub kind: DataKind,
    pub labels: Option<Vec<usize>>,
    pub normalization: Option<Vec<ColumnStats>>,
}

impl Dataset {
    /// Builds a dataset, checking that binary samples are 0/1 and that
    /// there is one label per row.
    pub fn new(samples: Array2<f64>, kind: DataKind, labels: Option<Vec<usize>>) -> Result<Self> {
        if kind == DataKind::Binary {
            if let Some(v) = samples.iter().find(|&&v| v != 0.0 && v != 1.0) {
                return Err(LrbnError::InvalidValue(format!(
                    "binary dataset contains {v}"
                )));
            }
        }
        if let Some(l) = &labels {
            if l.len() != samples.nrows() {
                return Err(LrbnError::DimensionMismatch {
                    context: "labels",
                    expected: samples.nrows(),
                    found: l.len(),
                });
            }
        }
        Ok(Self {
            samples,
            kind,
            labels,
            normalization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    /// Rows `indices`, in that order, with matching labels.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            samples: self.samples.select(Axis(0), indices),
            kind: self.kind,
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            normalization: self.normalization.clone(),
        }
    }

    /// First `n` rows (or all of them).
    pub fn head(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.labels
            .as_ref()
            .map(|l| l.iter().max().map_or(0, |&c| c + 1))
    }
}

/// `[v > threshold]` entrywise.
pub fn binarize(data: ArrayView2<'_, f64>, threshold: f64) -> Array2<f64> {
    data.mapv(|v| if v > threshold { 1.0 } else { 0.0 })
}

/// Scales raw bytes to `[0, 1]`.
pub fn scale_bytes(bytes: &[u8], rows: usize, cols: usize) -> Result<Array2<f64>> {
    Array2::from_shape_vec(
        (rows, cols),
        bytes.iter().map(|&v| f64::from(v) / 255.0).collect(),
    )
    .map_err(|_| {
        LrbnError::DimensionInconsistency(format!(
            "{} bytes for a {rows}x{cols} matrix",
            bytes.len()
        ))
    })
}

/// Centres every column and scales it to unit population variance.
/// Constant columns are centred only and recorded with `stddev = 0`.
pub fn normalize_columns(data: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Vec<ColumnStats>)> {
    let m = data.nrows();
    if m < 2 {
        return Err(LrbnError::EmptyData(
            "normalisation needs at least two samples",
        ));
    }
    let mut out = data.to_owned();
    let mut stats = Vec::with_capacity(data.ncols());
    for (j, mut col) in out.axis_iter_mut(Axis(1)).enumerate() {
        let mean = col.sum() / m as f64;
        col.mapv_inplace(|v| v - mean);
        let var = col.iter().map(|v| v * v).sum::<f64>() / m as f64;
        let stddev = var.sqrt();
        if stddev > 0.0 {
            col.mapv_inplace(|v| v / stddev);
            stats.push(ColumnStats { mean, stddev });
        } else {
            log::warn!("column {j} is constant; centred without scaling");
            stats.push(ColumnStats { mean, stddev: 0.0 });
        }
    }
    Ok((out, stats))
}

/// Applies previously recorded statistics, e.g. training-set statistics to
/// test data.
pub fn apply_normalization(
    data: ArrayView2<'_, f64>,
    stats: &[ColumnStats],
) -> Result<Array2<f64>> {
    crate::error::check_len("normalisation stats", data.ncols(), stats.len())?;
    let mut out = data.to_owned();
    for (mut col, s) in out.axis_iter_mut(Axis(1)).zip(stats) {
        let scale = if s.stddev > 0.0 { s.stddev } else { 1.0 };
        col.mapv_inplace(|v| (v - s.mean) / scale);
    }
    Ok(out)
}

/// Inverse of [`normalize_columns`].
pub fn denormalize_columns(
    data: ArrayView2<'_, f64>,
    stats: &[ColumnStats],
) -> Result<Array2<f64>> {
    crate::error::check_len("normalisation stats", data.ncols(), stats.len())?;
    let mut out = data.to_owned();
    for (mut col, s) in out.axis_iter_mut(Axis(1)).zip(stats) {
        let scale = if s.stddev > 0.0 { s.stddev } else { 1.0 };
        col.mapv_inplace(|v| v * scale + s.mean);
    }
    Ok(out)
}

/// Seeded partition of `0..m` into `(train, validation)` with `k`
/// validation indices. Both lists are sorted.
pub fn split_indices(m: usize, k: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if k >= m {
        return Err(LrbnError::InvalidConfig(format!(
            "validation size {k} must be smaller than the sample count {m}"
        )));
    }
    let mut perm: Vec<usize> = (0..m).collect();
    perm.shuffle(&mut rng::stream(seed, Stream::Split, 0));
    let mut val = perm[..k].to_vec();
    let mut train = perm[k..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

/// Splits off `k` random rows as a validation set.
pub fn split_validation(data: &Dataset, k: usize, seed: u64) -> Result<(Dataset, Dataset)> {
    let (train, val) = split_indices(data.len(), k, seed)?;
    Ok((data.subset(&train), data.subset(&val)))
}

/// Loads an IDX image file, optionally with its label file, as a dataset of
/// `[0, 1]` pixels; binarised at `threshold` when one is given.
pub fn load_idx_dataset(
    images: impl AsRef<Path>,
    labels: Option<&Path>,
    threshold: Option<f64>,
) -> Result<Dataset> {
    let images = load_idx(images)?;
    if images.dims.is_empty() {
        return Err(LrbnError::DimensionInconsistency(
            "image file has no sample dimension".into(),
        ));
    }
    let rows = images.dims[0];
    let cols = images.dims[1..].iter().product::<usize>();
    let mut samples = scale_bytes(&images.data, rows, cols)?;
    let kind = match threshold {
        Some(t) => {
            samples = binarize(samples.view(), t);
            DataKind::Binary
        }
        None => DataKind::Real,
    };
    let labels = match labels {
        Some(p) => Some(load_idx(p)?.data.into_iter().map(usize::from).collect()),
        None => None,
    };
    Dataset::new(samples, kind, labels)
}

/// Loads either container, choosing by magic bytes.
pub fn load_any(
    path: impl AsRef<Path>,
    labels: Option<&Path>,
    threshold: Option<f64>,
) -> Result<Dataset> {
    let path = path.as_ref();
    let mut head = [0u8; 4];
    {
        use std::io::Read;
        let mut f = std::fs::File::open(path)?;
        f.read_exact(&mut head)
            .map_err(|_| LrbnError::Truncated("header"))?;
    }
    if &head == b"LMAT" {
        let mut ds = load_lmat(path)?;
        if let Some(t) = threshold {
            if ds.kind == DataKind::Real {
                ds.samples = binarize(ds.samples.view(), t);
                ds.kind = DataKind::Binary;
            }
        }
        Ok(ds)
    } else {
        load_idx_dataset(path, labels, threshold)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn binarize_is_strict() {
        let b = binarize(array![[0.5, 0.6, 0.4]].view(), 0.5);
        assert_eq!(b, array![[0.0, 1.0, 0.0]]);
        assert_eq!(binarize(b.view(), 0.5), b);
    }

    #[test]
    fn two_point_normalisation() {
        let (z, s) = normalize_columns(array![[1.0, 7.0], [3.0, 7.0]].view()).unwrap();
        assert_eq!(z, array![[-1.0, 0.0], [1.0, 0.0]]);
        assert_eq!(
            s[0],
            ColumnStats {
                mean: 2.0,
                stddev: 1.0
            }
        );
        assert_eq!(s[1].stddev, 0.0);
        assert!(normalize_columns(array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn split_sizes_and_determinism() {
        let (t, v) = split_indices(10, 0, 3).unwrap();
        assert_eq!((t.len(), v.len()), (10, 0));
        let a = split_indices(60_000, 100, 7).unwrap();
        assert_eq!((a.0.len(), a.1.len()), (59_900, 100));
        assert_eq!(a, split_indices(60_000, 100, 7).unwrap());
        assert_ne!(a.1, split_indices(60_000, 100, 8).unwrap().1);
        assert!(split_indices(5, 5, 0).is_err());
    }

    #[test]
    fn subset_keeps_labels_aligned() {
        let ds = Dataset::new(
            array![[0.0], [1.0], [1.0]],
            DataKind::Binary,
            Some(vec![2, 0, 1]),
        )
        .unwrap();
        let s = ds.subset(&[2, 0]);
        assert_eq!(s.samples, array![[1.0], [0.0]]);
        assert_eq!(s.labels, Some(vec![1, 2]));
        assert_eq!(ds.num_classes(), Some(3));
    }
}
