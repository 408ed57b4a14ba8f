use std::path::PathBuf;

use lrbn::data_io::{
    binarize, denormalize_columns, encode_pgm, load_idx, load_idx_dataset, normalize_columns,
    parse_idx, split_indices, write_idx, write_pgm, write_pgm_grid, DataKind, IdxTensor,
};
use ndarray::Array2;
use proptest::prelude::*;

/// Minimal P5 reader, independent of the writer.
fn read_pgm(bytes: &[u8]) -> (usize, usize, Vec<u8>) {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        fields.push(String::from_utf8(bytes[start..pos].to_vec()).unwrap());
    }
    assert_eq!(fields[0], "P5");
    assert_eq!(fields[3], "255");
    let (w, h): (usize, usize) = (fields[1].parse().unwrap(), fields[2].parse().unwrap());
    (w, h, bytes[pos + 1..].to_vec())
}

fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("LRBN_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("/root/data/mnist-subset"));
    dir.join("t10k-images-idx3-ubyte").exists().then_some(dir)
}

#[test]
fn pgm_round_trip_through_independent_reader() {
    let pixels: Vec<f64> = (0..=255).map(|v| f64::from(v) / 255.0).collect();
    let (w, h, data) = read_pgm(&encode_pgm(&pixels, 16, 16).unwrap());
    assert_eq!((w, h), (16, 16));
    assert_eq!(data, (0..=255).collect::<Vec<u8>>());

    let dir = tempfile::tempdir().unwrap();
    let images = Array2::from_shape_fn((3, 6), |(k, i)| ((k + i) % 2) as f64);
    let paths = write_pgm(images.view(), 2, 3, dir.path(), "img").unwrap();
    assert_eq!(paths.len(), 3);
    let (w, h, data) = read_pgm(&std::fs::read(&paths[1]).unwrap());
    assert_eq!((w, h), (3, 2));
    assert_eq!(data, vec![255, 0, 255, 0, 255, 0]);
    assert!(
        write_pgm(Array2::zeros((0, 6)).view(), 2, 3, dir.path(), "none")
            .unwrap()
            .is_empty()
    );

    let grid = dir.path().join("grid.pgm");
    write_pgm_grid(Array2::ones((20, 4)).view(), 2, 2, 2, 10, &grid).unwrap();
    let (w, h, data) = read_pgm(&std::fs::read(&grid).unwrap());
    assert_eq!((w, h), (10 * 3 + 1, 2 * 3 + 1));
    assert_eq!(data.iter().filter(|&&b| b == 255).count(), 80);
}

#[test]
fn binarised_mnist_pixel_count_matches_direct_scan() {
    let Some(dir) = mnist_dir() else {
        eprintln!("skipping: no MNIST IDX files found");
        return;
    };
    let images = dir.join("t10k-images-idx3-ubyte");
    let ds = load_idx_dataset(
        &images,
        Some(&dir.join("t10k-labels-idx1-ubyte")),
        Some(0.5),
    )
    .unwrap();
    assert_eq!(ds.kind, DataKind::Binary);
    assert_eq!(ds.dim(), 784);
    let raw = std::fs::read(&images).unwrap();
    let scan = raw[16..]
        .iter()
        .filter(|&&b| f64::from(b) / 255.0 > 0.5)
        .count();
    assert_eq!(ds.samples.sum() as usize, scan);
    assert!(ds.labels.as_ref().unwrap().iter().all(|&c| c < 10));
    assert_eq!(load_idx(&images).unwrap().dims[1..], [28, 28]);
}

#[test]
fn missing_file_names_the_path() {
    let err = load_idx("/nonexistent/images.idx").unwrap_err().to_string();
    assert!(err.contains("/nonexistent/images.idx"), "{err}");
}

proptest! {
    #[test]
    fn idx_round_trip(dims in proptest::collection::vec(1usize..6, 1..4), seed in any::<u8>()) {
        let n: usize = dims.iter().product();
        let data: Vec<u8> = (0..n).map(|k| (k as u8).wrapping_mul(31).wrapping_add(seed)).collect();
        let t = IdxTensor { dims, data };
        prop_assert_eq!(parse_idx(&write_idx(&t).unwrap()).unwrap(), t);
    }

    #[test]
    fn binarize_is_idempotent(values in proptest::collection::vec(0.0f64..1.0, 1..50), t in 0.0f64..1.0) {
        let m = Array2::from_shape_vec((1, values.len()), values).unwrap();
        let once = binarize(m.view(), t);
        prop_assert_eq!(binarize(once.view(), 0.5), once);
    }

    #[test]
    fn normalisation_holds_and_inverts(
        rows in 2usize..40,
        cols in 1usize..6,
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((rows, cols), |_| r.random_range(-50.0..50.0));
        let (z, stats) = normalize_columns(data.view()).unwrap();
        for col in z.columns() {
            let mean = col.sum() / rows as f64;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rows as f64;
            prop_assert!(mean.abs() < 1e-10);
            prop_assert!((var.sqrt() - 1.0).abs() < 1e-10);
        }
        let back = denormalize_columns(z.view(), &stats).unwrap();
        for (a, b) in back.iter().zip(&data) {
            prop_assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn splits_partition_the_indices(m in 1usize..500, frac in 0.0f64..1.0, seed in any::<u64>()) {
        let k = ((m as f64) * frac) as usize % m;
        let (train, val) = split_indices(m, k, seed).unwrap();
        prop_assert_eq!(val.len(), k);
        let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..m).collect::<Vec<_>>());
        prop_assert_eq!(split_indices(m, k, seed).unwrap(), (train, val));
    }
}
