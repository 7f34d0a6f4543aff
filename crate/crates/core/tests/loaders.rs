//! Corpus loaders against fixtures written by an independent MAT writer.

use std::path::PathBuf;

use pipeinv::datasets::loaders::{load_svhn_dir, load_svhn_mat};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

/// Pixel `(row, col, channel)` of sample `s` in the fixtures.
fn expected(row: usize, col: usize, ch: usize, s: usize) -> f32 {
    ((row * 7 + col * 3 + ch * 11 + s * 13) % 256) as f32 / 255.0
}

#[test]
fn svhn_mat_plain_and_compressed() {
    for name in ["svhn_tiny_32x32.mat", "svhn_tiny_32x32_zlib.mat"] {
        let set = load_svhn_mat(&fixture(name)).unwrap();
        assert_eq!(set.len(), 6, "{name}");
        assert_eq!(set.image_shape(), (32, 32, 3));
        // label 10 denotes digit 0
        assert_eq!(set.labels(), &[0, 1, 2, 3, 9, 0]);
        for s in 0..6 {
            for (row, col, ch) in [(0, 0, 0), (5, 17, 2), (31, 31, 1), (12, 3, 0)] {
                assert_eq!(set.images()[[s, row, col, ch]], expected(row, col, ch, s), "{name} sample {s} ({row},{col},{ch})");
            }
        }
    }
}

#[test]
fn svhn_dir_requires_both_files() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixture("svhn_tiny_32x32.mat"), dir.path().join("train_32x32.mat")).unwrap();
    assert!(load_svhn_dir(dir.path()).is_err());
    std::fs::copy(fixture("svhn_tiny_32x32_zlib.mat"), dir.path().join("test_32x32.mat")).unwrap();
    let (train, test) = load_svhn_dir(dir.path()).unwrap();
    assert_eq!(train.images(), test.images());
}

#[test]
fn truncated_mat_is_an_error() {
    let bytes = std::fs::read(fixture("svhn_tiny_32x32.mat")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cut.mat");
    std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
    assert!(load_svhn_mat(&path).is_err());
}
