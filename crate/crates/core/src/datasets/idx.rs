//! IDX files as distributed for MNIST and eMNIST: a big-endian header
//! `0, 0, type, ndims`, then `ndims` big-endian `u32` dimensions, then the
//! payload. Only the unsigned-byte type is supported. Files may be gzipped.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::{one_hot, Dataset, Samples};
use crate::error::{ChlError, Result};

const TYPE_U8: u8 = 0x08;
pub const IMAGES_MAGIC: u32 = 2051;
pub const LABELS_MAGIC: u32 = 2049;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<u32>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn magic(&self) -> u32 {
        (u32::from(TYPE_U8) << 8) | self.dims.len() as u32
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| ChlError::DataFormat(m);
        if bytes.len() < 4 {
            return Err(bad("file shorter than the IDX header".into()));
        }
        if bytes[0] != 0 || bytes[1] != 0 {
            return Err(bad(format!("bad IDX magic {:02x}{:02x}", bytes[0], bytes[1])));
        }
        if bytes[2] != TYPE_U8 {
            return Err(bad(format!("unsupported IDX element type 0x{:02x}", bytes[2])));
        }
        let ndims = usize::from(bytes[3]);
        let header = 4 + 4 * ndims;
        if bytes.len() < header {
            return Err(bad("truncated IDX dimensions".into()));
        }
        let dims: Vec<u32> = bytes[4..header]
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let count = dims.iter().try_fold(1usize, |acc, &d| acc.checked_mul(d as usize));
        let count = count.ok_or_else(|| bad("IDX dimensions overflow".into()))?;
        let payload = &bytes[header..];
        if payload.len() != count {
            return Err(bad(format!(
                "IDX payload has {} bytes, dimensions {:?} need {}",
                payload.len(),
                dims,
                count
            )));
        }
        Ok(IdxArray {
            dims,
            data: payload.to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        out.extend_from_slice(&self.magic().to_be_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> ChlError {
    ChlError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

/// Reads a raw or gzipped IDX file.
pub fn read_idx(path: &Path) -> Result<IdxArray> {
    let raw = fs::read(path).map_err(|e| io_err(path, e))?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| io_err(path, e))?;
        out
    } else {
        raw
    };
    IdxArray::parse(&bytes)
}

/// Writes an uncompressed IDX file.
pub fn write_idx(path: &Path, arr: &IdxArray) -> Result<()> {
    fs::write(path, arr.to_bytes()).map_err(|e| io_err(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct IdxOptions {
    pub num_classes: usize,
    /// Value of the first class label in the file (1 for eMNIST letters).
    pub label_base: u8,
    /// Keep only the first `limit` samples.
    pub limit: Option<usize>,
}

/// Image/label file pair as one-hot samples with pixels scaled to `[0, 1]`.
pub fn load_idx(images_path: &Path, labels_path: &Path, opts: IdxOptions) -> Result<Samples> {
    let images = read_idx(images_path)?;
    let labels = read_idx(labels_path)?;
    if images.magic() != IMAGES_MAGIC {
        return Err(ChlError::DataFormat(format!(
            "{}: magic {} is not an image file",
            images_path.display(),
            images.magic()
        )));
    }
    if labels.magic() != LABELS_MAGIC {
        return Err(ChlError::DataFormat(format!(
            "{}: magic {} is not a label file",
            labels_path.display(),
            labels.magic()
        )));
    }
    let n = images.dims[0] as usize;
    if labels.dims[0] as usize != n {
        return Err(ChlError::DataFormat(format!(
            "{n} images but {} labels",
            labels.dims[0]
        )));
    }
    let width = (images.dims[1] * images.dims[2]) as usize;
    let keep = opts.limit.map_or(n, |l| l.min(n));
    let mut samples = Samples::new(width, opts.num_classes);
    let mut pixels = vec![0.0; width];
    for i in 0..keep {
        let raw = labels.data[i];
        let class = raw
            .checked_sub(opts.label_base)
            .map(usize::from)
            .filter(|&c| c < opts.num_classes)
            .ok_or_else(|| {
                ChlError::DataFormat(format!("label {raw} of sample {i} outside the class range"))
            })?;
        for (p, &b) in pixels.iter_mut().zip(&images.data[i * width..(i + 1) * width]) {
            *p = f64::from(b) / 255.0;
        }
        samples.push(&pixels, &one_hot(class, opts.num_classes))?;
    }
    Ok(samples)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MnistFamily {
    Mnist,
    /// The balanced 26-class letters split.
    EmnistLetters,
}

impl MnistFamily {
    pub fn name(self) -> &'static str {
        match self {
            MnistFamily::Mnist => "mnist",
            MnistFamily::EmnistLetters => "emnist-letters",
        }
    }

    pub fn num_classes(self) -> usize {
        match self {
            MnistFamily::Mnist => 10,
            MnistFamily::EmnistLetters => 26,
        }
    }

    fn label_base(self) -> u8 {
        match self {
            MnistFamily::Mnist => 0,
            MnistFamily::EmnistLetters => 1,
        }
    }

    fn stem(self, split: &str, kind: &str) -> String {
        let (prefix, split) = match (self, split) {
            (MnistFamily::Mnist, "test") => ("", "t10k"),
            (MnistFamily::Mnist, _) => ("", "train"),
            (MnistFamily::EmnistLetters, s) => ("emnist-letters-", s),
        };
        match kind {
            "images" => format!("{prefix}{split}-images-idx3-ubyte"),
            _ => format!("{prefix}{split}-labels-idx1-ubyte"),
        }
    }

    /// Path of a split's file under `dir`, raw or `.gz`.
    pub fn locate(self, dir: &Path, split: &str, kind: &str) -> Option<PathBuf> {
        let stem = self.stem(split, kind);
        [stem.clone(), format!("{stem}.gz")]
            .into_iter()
            .map(|f| dir.join(f))
            .find(|p| p.is_file())
    }

    /// Whether all four files exist under `dir`.
    pub fn available(self, dir: &Path) -> bool {
        ["train", "test"]
            .iter()
            .all(|s| ["images", "labels"].iter().all(|k| self.locate(dir, s, k).is_some()))
    }
}

/// Loads both splits of an MNIST-family dataset from `dir`.
pub fn load_mnist_family(
    dir: &Path,
    family: MnistFamily,
    train_limit: Option<usize>,
    test_limit: Option<usize>,
) -> Result<Dataset> {
    let find = |split: &str, kind: &str| {
        family.locate(dir, split, kind).ok_or_else(|| ChlError::Io {
            path: dir.join(family.stem(split, kind)).display().to_string(),
            message: "file not found (raw or .gz)".into(),
        })
    };
    let opts = |limit| IdxOptions {
        num_classes: family.num_classes(),
        label_base: family.label_base(),
        limit,
    };
    let train = load_idx(&find("train", "images")?, &find("train", "labels")?, opts(train_limit))?;
    let test = load_idx(&find("test", "images")?, &find("test", "labels")?, opts(test_limit))?;
    Dataset::new(family.name(), train, test)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_images() -> IdxArray {
        IdxArray {
            dims: vec![3, 2, 2],
            data: vec![0, 255, 51, 102, 1, 2, 3, 4, 255, 255, 0, 0],
        }
    }

    #[test]
    fn header_layout() {
        let bytes = tiny_images().to_bytes();
        assert_eq!(&bytes[..4], &[0, 0, 8, 3]);
        assert_eq!(u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]), IMAGES_MAGIC);
        assert_eq!(&bytes[4..8], &[0, 0, 0, 3]);
        assert_eq!(IdxArray::parse(&bytes).unwrap(), tiny_images());
    }

    #[test]
    fn rejects_bad_files() {
        let mut bytes = tiny_images().to_bytes();
        bytes[2] = 0x0d;
        assert!(matches!(IdxArray::parse(&bytes), Err(ChlError::DataFormat(_))));
        let bytes = tiny_images().to_bytes();
        assert!(IdxArray::parse(&bytes[..bytes.len() - 1]).is_err());
        assert!(IdxArray::parse(&[0, 0]).is_err());
        assert!(IdxArray::parse(&[1, 0, 8, 1, 0, 0, 0, 0]).is_err());
    }
}
