//! Readers for the public digit corpora.
//!
//! * MNIST ships as IDX files (`train-images-idx3-ubyte` etc., optionally gzipped).
//! * SVHN's cropped-digit release ships as MATLAB level-5 `.mat` files holding
//!   `X` (`32 × 32 × 3 × N`, uint8, column-major) and `y` (`N × 1`, labels
//!   `1..=10` with `10` meaning digit zero).
//!
//! Pixel values are scaled by `1/255`; unit-interval rescaling happens in the
//! dataset builders. A 5,000-image MNIST subset (500 per class) is compiled
//! into the crate for desk-scale experiments, see [`bundled_digits`].

use std::collections::HashMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::{GzDecoder, ZlibDecoder};
use ndarray::Array4;

use super::LabeledImageSet;
use crate::error::{Error, IoContext, Result};

pub const DIGIT_CLASSES: usize = 10;

static BUNDLED_IMAGES: &[u8] = include_bytes!("../../data/digits5k-images-idx3-ubyte.gz");
static BUNDLED_LABELS: &[u8] = include_bytes!("../../data/digits5k-labels-idx1-ubyte.gz");

/// The compiled-in 5,000-image MNIST subset, 28×28×1, 500 images per class.
pub fn bundled_digits() -> LabeledImageSet {
    let images = parse_idx(&gunzip(BUNDLED_IMAGES).expect("bundled images"), Path::new("<bundled>"))
        .expect("bundled images parse");
    let labels = parse_idx(&gunzip(BUNDLED_LABELS).expect("bundled labels"), Path::new("<bundled>"))
        .expect("bundled labels parse");
    idx_to_set(images, labels, Path::new("<bundled>")).expect("bundled corpus is valid")
}

fn gunzip(bytes: &[u8]) -> std::io::Result<Vec<u8>> {
    let mut out = Vec::new();
    GzDecoder::new(bytes).read_to_end(&mut out)?;
    Ok(out)
}

struct Idx {
    dims: Vec<usize>,
    data: Vec<u8>,
}

fn parse_idx(bytes: &[u8], path: &Path) -> Result<Idx> {
    let bad = |m: &str| Error::Corpus { path: path.to_path_buf(), message: m.to_string() };
    if bytes.len() < 4 || bytes[0] != 0 || bytes[1] != 0 {
        return Err(bad("missing IDX magic"));
    }
    if bytes[2] != 0x08 {
        return Err(bad("only unsigned-byte IDX payloads are supported"));
    }
    let ndims = bytes[3] as usize;
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(bad("truncated IDX header"));
    }
    let dims: Vec<usize> = (0..ndims)
        .map(|d| u32::from_be_bytes(bytes[4 + 4 * d..8 + 4 * d].try_into().unwrap()) as usize)
        .collect();
    let expected: usize = dims.iter().product();
    if bytes.len() - header != expected {
        return Err(bad(&format!("payload has {} bytes, header implies {expected}", bytes.len() - header)));
    }
    Ok(Idx { dims, data: bytes[header..].to_vec() })
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).at(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        gunzip(&raw).at(path)
    } else {
        Ok(raw)
    }
}

fn idx_to_set(images: Idx, labels: Idx, path: &Path) -> Result<LabeledImageSet> {
    let bad = |m: String| Error::Corpus { path: path.to_path_buf(), message: m };
    if images.dims.len() != 3 || labels.dims.len() != 1 {
        return Err(bad(format!("expected 3-d images and 1-d labels, got {:?} / {:?}", images.dims, labels.dims)));
    }
    let (n, h, w) = (images.dims[0], images.dims[1], images.dims[2]);
    if labels.dims[0] != n {
        return Err(bad(format!("{n} images but {} labels", labels.dims[0])));
    }
    let pixels: Vec<f32> = images.data.iter().map(|&p| p as f32 / 255.0).collect();
    let images = Array4::from_shape_vec((n, h, w, 1), pixels).expect("size checked");
    let labels: Vec<usize> = labels.data.iter().map(|&l| l as usize).collect();
    LabeledImageSet::new(images, labels, DIGIT_CLASSES)
}

/// Loads an IDX image/label file pair (plain or gzipped).
pub fn load_idx_pair(images: &Path, labels: &Path) -> Result<LabeledImageSet> {
    let img = parse_idx(&read_maybe_gz(images)?, images)?;
    let lab = parse_idx(&read_maybe_gz(labels)?, labels)?;
    idx_to_set(img, lab, images)
}

fn find_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    for candidate in [dir.join(stem), dir.join(format!("{stem}.gz"))] {
        if candidate.exists() {
            return Ok(candidate);
        }
    }
    Err(Error::Corpus { path: dir.join(stem), message: "file not found (tried plain and .gz)".into() })
}

/// Loads `(train, test)` from a directory holding the four standard MNIST IDX files.
pub fn load_mnist_dir(dir: &Path) -> Result<(LabeledImageSet, LabeledImageSet)> {
    let train = load_idx_pair(
        &find_file(dir, "train-images-idx3-ubyte")?,
        &find_file(dir, "train-labels-idx1-ubyte")?,
    )?;
    let test = load_idx_pair(
        &find_file(dir, "t10k-images-idx3-ubyte")?,
        &find_file(dir, "t10k-labels-idx1-ubyte")?,
    )?;
    Ok((train, test))
}

/// Loads `(train, test)` from a directory holding `train_32x32.mat` and `test_32x32.mat`.
pub fn load_svhn_dir(dir: &Path) -> Result<(LabeledImageSet, LabeledImageSet)> {
    Ok((load_svhn_mat(&dir.join("train_32x32.mat"))?, load_svhn_mat(&dir.join("test_32x32.mat"))?))
}

/// Loads one SVHN cropped-digit `.mat` file.
pub fn load_svhn_mat(path: &Path) -> Result<LabeledImageSet> {
    let bad = |m: String| Error::Corpus { path: path.to_path_buf(), message: m };
    let vars = read_mat5(&fs::read(path).at(path)?, path)?;
    let x = vars.get("X").ok_or_else(|| bad("no variable `X`".into()))?;
    let y = vars.get("y").ok_or_else(|| bad("no variable `y`".into()))?;
    if x.dims.len() != 4 {
        return Err(bad(format!("`X` should be 4-d, has dims {:?}", x.dims)));
    }
    let (h, w, c, n) = (x.dims[0], x.dims[1], x.dims[2], x.dims[3]);
    if y.len() != n {
        return Err(bad(format!("{n} images but {} labels", y.len())));
    }
    // column-major: linear index = row + h * (col + w * (chan + c * sample))
    let mut images = Array4::<f32>::zeros((n, h, w, c));
    for s in 0..n {
        for ch in 0..c {
            for col in 0..w {
                for row in 0..h {
                    images[[s, row, col, ch]] = x.get(row + h * (col + w * (ch + c * s))) as f32 / 255.0;
                }
            }
        }
    }
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let v = y.get(i);
        let l = match v as i64 {
            10 => 0,
            d @ 0..=9 if v.fract() == 0.0 => d as usize,
            _ => return Err(bad(format!("label {v} is not a digit in 1..=10"))),
        };
        labels.push(l);
    }
    LabeledImageSet::new(images, labels, DIGIT_CLASSES)
}

/// A numeric MATLAB array (column-major) as read from a level-5 file.
#[derive(Debug, Clone)]
pub struct MatArray {
    pub dims: Vec<usize>,
    data: MatData,
}

#[derive(Debug, Clone)]
enum MatData {
    U8(Vec<u8>),
    F64(Vec<f64>),
}

impl MatArray {
    pub fn len(&self) -> usize {
        match &self.data {
            MatData::U8(v) => v.len(),
            MatData::F64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, i: usize) -> f64 {
        match &self.data {
            MatData::U8(v) => v[i] as f64,
            MatData::F64(v) => v[i],
        }
    }
}

const MI_INT8: u32 = 1;
const MI_UINT8: u32 = 2;
const MI_INT16: u32 = 3;
const MI_UINT16: u32 = 4;
const MI_INT32: u32 = 5;
const MI_UINT32: u32 = 6;
const MI_SINGLE: u32 = 7;
const MI_DOUBLE: u32 = 9;
const MI_INT64: u32 = 12;
const MI_UINT64: u32 = 13;
const MI_MATRIX: u32 = 14;
const MI_COMPRESSED: u32 = 15;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self) -> Option<u32> {
        let v = u32::from_le_bytes(self.bytes.get(self.pos..self.pos + 4)?.try_into().ok()?);
        self.pos += 4;
        Some(v)
    }

    /// Next data element as `(type, payload)`, honouring the small-element form and 8-byte padding.
    fn element(&mut self) -> Option<(u32, &'a [u8])> {
        let first = self.u32()?;
        if first >> 16 != 0 {
            let (ty, n) = (first & 0xffff, (first >> 16) as usize);
            let payload = self.bytes.get(self.pos..self.pos + n)?;
            self.pos += 4;
            return Some((ty, payload));
        }
        let n = self.u32()? as usize;
        let payload = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += if first == MI_COMPRESSED { n } else { n.div_ceil(8) * 8 };
        Some((first, payload))
    }
}

fn decode_numeric(ty: u32, payload: &[u8]) -> Option<MatData> {
    fn conv<const W: usize>(p: &[u8], f: impl Fn([u8; W]) -> f64) -> Vec<f64> {
        p.chunks_exact(W).map(|c| f(c.try_into().unwrap())).collect()
    }
    Some(match ty {
        MI_UINT8 => MatData::U8(payload.to_vec()),
        MI_INT8 => MatData::F64(payload.iter().map(|&b| b as i8 as f64).collect()),
        MI_INT16 => MatData::F64(conv::<2>(payload, |b| i16::from_le_bytes(b) as f64)),
        MI_UINT16 => MatData::F64(conv::<2>(payload, |b| u16::from_le_bytes(b) as f64)),
        MI_INT32 => MatData::F64(conv::<4>(payload, |b| i32::from_le_bytes(b) as f64)),
        MI_UINT32 => MatData::F64(conv::<4>(payload, |b| u32::from_le_bytes(b) as f64)),
        MI_SINGLE => MatData::F64(conv::<4>(payload, |b| f32::from_le_bytes(b) as f64)),
        MI_DOUBLE => MatData::F64(conv::<8>(payload, f64::from_le_bytes)),
        MI_INT64 => MatData::F64(conv::<8>(payload, |b| i64::from_le_bytes(b) as f64)),
        MI_UINT64 => MatData::F64(conv::<8>(payload, |b| u64::from_le_bytes(b) as f64)),
        _ => return None,
    })
}

fn parse_matrix(payload: &[u8]) -> Option<(String, MatArray)> {
    let mut cur = Cursor { bytes: payload, pos: 0 };
    let (_, _flags) = cur.element()?;
    let (dim_ty, dim_bytes) = cur.element()?;
    if dim_ty != MI_INT32 {
        return None;
    }
    let dims: Vec<usize> = dim_bytes
        .chunks_exact(4)
        .map(|c| i32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let (_, name) = cur.element()?;
    let name = String::from_utf8_lossy(name).into_owned();
    let (ty, real) = cur.element()?;
    let data = decode_numeric(ty, real)?;
    Some((name, MatArray { dims, data }))
}

/// Reads the numeric variables of a little-endian MATLAB level-5 file.
/// Non-numeric variables (cells, structs, sparse) are skipped.
pub fn read_mat5(bytes: &[u8], path: &Path) -> Result<HashMap<String, MatArray>> {
    let bad = |m: &str| Error::Corpus { path: path.to_path_buf(), message: m.to_string() };
    if bytes.len() < 128 {
        return Err(bad("shorter than the 128-byte MAT header"));
    }
    if &bytes[126..128] != b"IM" {
        return Err(bad("not a little-endian level-5 MAT file"));
    }
    let mut vars = HashMap::new();
    let mut pending: Vec<Vec<u8>> = vec![bytes[128..].to_vec()];
    while let Some(buf) = pending.pop() {
        let mut cur = Cursor { bytes: &buf, pos: 0 };
        while cur.pos + 8 <= buf.len() {
            let (ty, payload) = cur.element().ok_or_else(|| bad("truncated data element"))?;
            match ty {
                MI_COMPRESSED => {
                    let mut inflated = Vec::new();
                    ZlibDecoder::new(payload).read_to_end(&mut inflated).at(path)?;
                    pending.push(inflated);
                }
                MI_MATRIX => {
                    if let Some((name, arr)) = parse_matrix(payload) {
                        vars.insert(name, arr);
                    }
                }
                _ => {}
            }
        }
    }
    Ok(vars)
}
