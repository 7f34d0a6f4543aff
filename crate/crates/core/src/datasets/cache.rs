//! On-disk dataset cache: one `.npy` file per array plus a JSON manifest.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/{pool,test}_view_{a,b}.npy          f32, N × H × W × C
//! <dir>/{pool,test}_view_{a,b}_labels.npy   i64, N
//! <dir>/{pool,test}_pairs.npy               i64, P × 2
//! <dir>/folds.npy                           i64, P(pool)
//! <dir>/meta_<name>.npy                     f32, per-sample transform draws
//! ```

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use ndarray::{Array1, Array2, Array4};
use ndarray_npy::{ReadNpyExt, WriteNpyExt};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FoldAssignment, LabeledImageSet, MultiViewCorpus, MultiViewDataset, Pair, PairingMode, SplitTag};
use crate::error::{Error, IoContext, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub file: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub name: String,
    pub seed: u64,
    pub pairing_mode: PairingMode,
    pub class_count: usize,
    pub fold_count: usize,
    pub fold_seed: u64,
    pub pool_pairs: usize,
    pub test_pairs: usize,
    pub metadata: serde_json::Value,
    pub sample_metadata: Vec<String>,
    pub arrays: Vec<ArrayEntry>,
}

impl DatasetManifest {
    /// Combined digest of every array file; identifies the dataset content.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for a in &self.arrays {
            h.update(a.file.as_bytes());
            h.update(a.sha256.as_bytes());
        }
        hex(&h.finalize())
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn file_sha256(path: &Path) -> Result<String> {
    Ok(hex(&Sha256::digest(fs::read(path).at(path)?)))
}

struct Writer {
    dir: PathBuf,
    entries: Vec<ArrayEntry>,
}

impl Writer {
    fn put<A: WriteNpyExt>(&mut self, name: &str, array: &A, shape: Vec<usize>, dtype: &str) -> Result<()> {
        let path = self.dir.join(name);
        let file = File::create(&path).at(&path)?;
        array.write_npy(BufWriter::new(file))?;
        self.entries.push(ArrayEntry { file: name.into(), shape, dtype: dtype.into(), sha256: file_sha256(&path)? });
        Ok(())
    }

    fn put_images(&mut self, name: &str, set: &LabeledImageSet) -> Result<()> {
        let shape = set.images().shape().to_vec();
        self.put(&format!("{name}.npy"), set.images(), shape, "<f4")?;
        let labels: Array1<i64> = set.labels().iter().map(|&l| l as i64).collect();
        self.put(&format!("{name}_labels.npy"), &labels, vec![set.len()], "<i8")
    }

    fn put_split(&mut self, prefix: &str, ds: &MultiViewDataset) -> Result<()> {
        self.put_images(&format!("{prefix}_view_a"), &ds.view_a)?;
        self.put_images(&format!("{prefix}_view_b"), &ds.view_b)?;
        let mut pairs = Array2::<i64>::zeros((ds.len(), 2));
        for (k, p) in ds.pairs().iter().enumerate() {
            pairs[[k, 0]] = p.a as i64;
            pairs[[k, 1]] = p.b as i64;
        }
        self.put(&format!("{prefix}_pairs.npy"), &pairs, vec![ds.len(), 2], "<i8")
    }
}

/// Writes `corpus` into `dir` (created if missing) and returns the manifest.
pub fn save_corpus(corpus: &MultiViewCorpus, dir: &Path) -> Result<DatasetManifest> {
    fs::create_dir_all(dir).at(dir)?;
    let mut w = Writer { dir: dir.to_path_buf(), entries: Vec::new() };
    w.put_split("pool", &corpus.pool)?;
    w.put_split("test", &corpus.test)?;
    let folds: Array1<i64> = corpus.folds.fold_of_sample.iter().map(|&f| f as i64).collect();
    w.put("folds.npy", &folds, vec![folds.len()], "<i8")?;
    for (name, values) in &corpus.sample_metadata {
        let arr = Array1::from(values.clone());
        w.put(&format!("meta_{name}.npy"), &arr, vec![values.len()], "<f4")?;
    }
    let manifest = DatasetManifest {
        format_version: FORMAT_VERSION,
        name: corpus.name.clone(),
        seed: corpus.seed,
        pairing_mode: corpus.pool.pairing_mode,
        class_count: corpus.pool.class_count(),
        fold_count: corpus.folds.k,
        fold_seed: corpus.folds.seed,
        pool_pairs: corpus.pool.len(),
        test_pairs: corpus.test.len(),
        metadata: corpus.metadata.clone(),
        sample_metadata: corpus.sample_metadata.iter().map(|(n, _)| n.clone()).collect(),
        arrays: w.entries,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).at(&path)?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<DatasetManifest> {
    let path = dir.join(MANIFEST_FILE);
    Ok(serde_json::from_str(&fs::read_to_string(&path).at(&path)?)?)
}

fn open(dir: &Path, name: &str) -> Result<File> {
    let path = dir.join(name);
    File::open(&path).at(path)
}

fn load_images(dir: &Path, name: &str, class_count: usize) -> Result<LabeledImageSet> {
    let images = Array4::<f32>::read_npy(open(dir, &format!("{name}.npy"))?)?;
    let labels = Array1::<i64>::read_npy(open(dir, &format!("{name}_labels.npy"))?)?;
    LabeledImageSet::new(images, labels.iter().map(|&l| l as usize).collect(), class_count)
}

fn load_split(dir: &Path, prefix: &str, m: &DatasetManifest, split: SplitTag) -> Result<MultiViewDataset> {
    let a = load_images(dir, &format!("{prefix}_view_a"), m.class_count)?;
    let b = load_images(dir, &format!("{prefix}_view_b"), m.class_count)?;
    let raw = Array2::<i64>::read_npy(open(dir, &format!("{prefix}_pairs.npy"))?)?;
    let pairs = raw.rows().into_iter().map(|r| Pair { a: r[0] as usize, b: r[1] as usize }).collect();
    MultiViewDataset::new(Arc::new(a), Arc::new(b), pairs, m.pairing_mode, split)
}

/// Loads a corpus written by [`save_corpus`], verifying file digests.
pub fn load_corpus(dir: &Path) -> Result<MultiViewCorpus> {
    let m = read_manifest(dir)?;
    for entry in &m.arrays {
        let actual = file_sha256(&dir.join(&entry.file))?;
        if actual != entry.sha256 {
            return Err(Error::InvalidInput(format!("{} does not match its manifest digest", entry.file)));
        }
    }
    let pool = load_split(dir, "pool", &m, SplitTag::Train)?;
    let test = load_split(dir, "test", &m, SplitTag::Test)?;
    let folds = Array1::<i64>::read_npy(open(dir, "folds.npy")?)?;
    let folds = FoldAssignment { fold_of_sample: folds.iter().map(|&f| f as usize).collect(), k: m.fold_count, seed: m.fold_seed };
    if folds.fold_of_sample.len() != pool.len() {
        return Err(Error::InvalidInput("fold assignment does not cover the pool".into()));
    }
    let sample_metadata = m
        .sample_metadata
        .iter()
        .map(|name| Ok((name.clone(), Array1::<f32>::read_npy(open(dir, &format!("meta_{name}.npy"))?)?.to_vec())))
        .collect::<Result<Vec<_>>>()?;
    Ok(MultiViewCorpus { name: m.name, pool, test, folds, seed: m.seed, metadata: m.metadata, sample_metadata })
}
