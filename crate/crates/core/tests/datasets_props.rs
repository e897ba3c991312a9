use std::path::PathBuf;

use chl_core::datasets::{
    load_idx, load_mnist_family, make_autoencoder_pairs, make_bars_stripes, make_xor, read_idx, write_idx, IdxArray,
    IdxOptions, MnistFamily,
};
use chl_core::error::ChlError;
use proptest::prelude::*;

fn data_dir() -> PathBuf {
    std::env::var_os("CHL_DATA_DIR").map_or_else(|| PathBuf::from("/root/data"), PathBuf::from)
}

fn write_pair(dir: &std::path::Path, labels: &[u8], base: u8) -> (PathBuf, PathBuf) {
    let n = labels.len() as u32;
    let images = IdxArray { dims: vec![n, 2, 2], data: (0..n * 4).map(|v| (v * 17 % 256) as u8).collect() };
    let labels = IdxArray { dims: vec![n], data: labels.iter().map(|l| l + base).collect() };
    let (ip, lp) = (dir.join("img"), dir.join("lbl"));
    write_idx(&ip, &images).unwrap();
    write_idx(&lp, &labels).unwrap();
    (ip, lp)
}

#[test]
fn synthetic_sets_are_unit_range_and_one_hot() {
    for d in [make_xor(), make_bars_stripes()] {
        let (lo, hi) = d.train.value_range();
        assert!(lo >= 0.0 && hi <= 1.0);
    }
    for (_, t) in make_bars_stripes().train.iter() {
        assert_eq!(t.iter().filter(|&&v| v == 1.0).count(), 1);
        assert_eq!(t.iter().sum::<f64>(), 1.0);
    }
}

#[test]
fn bars_and_stripes_labels_follow_constancy() {
    let d = make_bars_stripes();
    for (img, t) in d.train.iter() {
        let rows_equal = (1..4).all(|r| img[r * 4..r * 4 + 4] == img[0..4]);
        let cols_equal = (0..4).all(|r| img[r * 4..r * 4 + 4].iter().all(|&v| v == img[r * 4]));
        if rows_equal && cols_equal {
            continue;
        }
        let class = if rows_equal { 0 } else { 1 };
        assert_eq!(t[class], 1.0);
    }
}

#[test]
fn one_hot_loading_and_label_offset() {
    let dir = tempfile::tempdir().unwrap();
    let (ip, lp) = write_pair(dir.path(), &[0, 3, 25], 1);
    let s = load_idx(&ip, &lp, IdxOptions { num_classes: 26, label_base: 1, limit: None }).unwrap();
    assert_eq!(s.len(), 3);
    assert_eq!(s.target(1)[3], 1.0);
    assert_eq!(s.target(2)[25], 1.0);
    assert_eq!(s.input(0)[1], 17.0 / 255.0);
    let limited = load_idx(&ip, &lp, IdxOptions { num_classes: 26, label_base: 1, limit: Some(2) }).unwrap();
    assert_eq!(limited.len(), 2);
}

#[test]
fn bad_labels_and_swapped_files_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (ip, lp) = write_pair(dir.path(), &[0, 10], 0);
    let opts = IdxOptions { num_classes: 10, label_base: 0, limit: None };
    assert!(matches!(load_idx(&ip, &lp, opts), Err(ChlError::DataFormat(_))));
    assert!(matches!(load_idx(&lp, &ip, opts), Err(ChlError::DataFormat(_))));
}

#[test]
fn gzip_files_read_like_raw() {
    use std::io::Write;
    let dir = tempfile::tempdir().unwrap();
    let arr = IdxArray { dims: vec![2, 3], data: vec![1, 2, 3, 4, 5, 6] };
    let path = dir.path().join("a.gz");
    let mut enc = flate2::write::GzEncoder::new(std::fs::File::create(&path).unwrap(), flate2::Compression::default());
    enc.write_all(&arr.to_bytes()).unwrap();
    enc.finish().unwrap();
    assert_eq!(read_idx(&path).unwrap(), arr);
}

#[test]
fn autoencoder_pairs_copy_inputs_bitwise() {
    let d = make_autoencoder_pairs(&make_xor());
    assert_eq!(d.train.len(), 4);
    for (i, t) in d.train.iter().chain(d.test.iter()) {
        assert_eq!(i, t);
    }
}

#[test]
fn mnist_files_when_present() {
    let dir = data_dir().join("mnist");
    if !MnistFamily::Mnist.available(&dir) {
        eprintln!("MNIST not found under {}; skipped", dir.display());
        return;
    }
    let d = load_mnist_family(&dir, MnistFamily::Mnist, None, Some(100)).unwrap();
    assert_eq!(d.train.len(), 60_000);
    assert_eq!(d.train.input_width(), 784);
    assert_eq!(d.test.len(), 100);
    let (lo, hi) = d.train.value_range();
    assert!(lo >= 0.0 && hi <= 1.0);
    let ae = make_autoencoder_pairs(&d);
    assert_eq!(ae.target_width(), 784);

    for stem in ["t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"] {
        let path = MnistFamily::Mnist.locate(&dir, "test", if stem.contains("images") { "images" } else { "labels" }).unwrap();
        let raw = std::fs::read(&path).unwrap();
        if raw.starts_with(&[0x1f, 0x8b]) {
            continue;
        }
        assert_eq!(read_idx(&path).unwrap().to_bytes(), raw, "{stem}");
    }
}

#[test]
fn emnist_files_when_present() {
    let dir = data_dir().join("emnist");
    if !MnistFamily::EmnistLetters.available(&dir) {
        eprintln!("eMNIST letters not found under {}; skipped", dir.display());
        return;
    }
    let d = load_mnist_family(&dir, MnistFamily::EmnistLetters, None, None).unwrap();
    assert_eq!(d.train.len(), 124_800);
    assert_eq!(d.test.len(), 20_800);
    assert_eq!(d.target_width(), 26);
}

proptest! {
    #[test]
    fn idx_round_trip(dims in prop::collection::vec(1u32..6, 1..4), seed in any::<u8>()) {
        let count: u32 = dims.iter().product();
        let arr = IdxArray { dims, data: (0..count).map(|i| (i as u8).wrapping_mul(seed)).collect() };
        let bytes = arr.to_bytes();
        let back = IdxArray::parse(&bytes).unwrap();
        prop_assert_eq!(back.to_bytes(), bytes);
        prop_assert_eq!(back, arr);
    }
}
