use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::datasets::{MultiViewCorpus, MultiViewDataset};
use crate::error::{Error, IoContext, Result};

/// Metrics of one completed fold, as persisted in `fold_<k>/metrics.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldOutcome {
    pub fold: usize,
    pub config_hash: String,
    pub metrics: BTreeMap<String, f64>,
    /// True when loaded from an earlier run instead of trained.
    #[serde(skip)]
    pub resumed: bool,
}

/// Mean and sample standard deviation over folds; `std` is absent for one fold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: Option<f64>,
    pub n: usize,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt());
        Some(MetricSummary { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub config_hash: String,
    pub folds: Vec<FoldOutcome>,
}

impl ResultTable {
    /// Per-metric summary over the folds that report it.
    pub fn summary(&self) -> BTreeMap<String, MetricSummary> {
        let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for f in &self.folds {
            for (k, v) in &f.metrics {
                values.entry(k.clone()).or_default().push(*v);
            }
        }
        values.into_iter().filter_map(|(k, v)| MetricSummary::of(&v).map(|s| (k, s))).collect()
    }

    /// `metric,mean,std,n` rows; a missing std is an empty cell.
    pub fn write_summary_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["metric", "mean", "std", "n"])?;
        for (k, s) in self.summary() {
            w.write_record([k, s.mean.to_string(), s.std.map(|v| v.to_string()).unwrap_or_default(), s.n.to_string()])?;
        }
        w.flush().at(path)?;
        Ok(())
    }
}

/// Trains and evaluates one fold, writing any artifacts under `dir`.
pub trait FoldRunner {
    fn run_fold(&mut self, fold: usize, train: &MultiViewDataset, val: &MultiViewDataset, dir: &Path) -> Result<BTreeMap<String, f64>>;
}

impl<F> FoldRunner for F
where
    F: FnMut(usize, &MultiViewDataset, &MultiViewDataset, &Path) -> Result<BTreeMap<String, f64>>,
{
    fn run_fold(&mut self, fold: usize, train: &MultiViewDataset, val: &MultiViewDataset, dir: &Path) -> Result<BTreeMap<String, f64>> {
        self(fold, train, val, dir)
    }
}

pub fn fold_dir(out: &Path, fold: usize) -> PathBuf {
    out.join(format!("fold_{fold}"))
}

/// Completed outcome stored for `fold`, if any.
pub fn load_fold(out: &Path, fold: usize) -> Result<Option<FoldOutcome>> {
    let path = fold_dir(out, fold).join("metrics.json");
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).at(&path)?;
    let mut outcome: FoldOutcome = serde_json::from_str(&text)?;
    outcome.resumed = true;
    Ok(Some(outcome))
}

/// Runs `folds` of `corpus` through `runner`. A fold whose `metrics.json`
/// carries `config_hash` is loaded instead of retrained; one with another
/// hash is an error. `metrics.json` is written last, so an interrupted fold
/// is retrained from scratch.
pub fn cross_validate(
    corpus: &MultiViewCorpus,
    folds: &[usize],
    config_hash: &str,
    out: &Path,
    runner: &mut dyn FoldRunner,
) -> Result<ResultTable> {
    if folds.is_empty() {
        return Err(Error::config("folds", "no folds requested"));
    }
    if corpus.folds.fold_of_sample.len() != corpus.pool.len() {
        return Err(Error::Results(format!(
            "fold assignment covers {} samples but the dataset pool has {}",
            corpus.folds.fold_of_sample.len(),
            corpus.pool.len()
        )));
    }
    if let Some(&bad) = folds.iter().find(|&&f| f >= corpus.folds.k) {
        return Err(Error::config("folds", format!("fold {bad} outside the {}-fold assignment", corpus.folds.k)));
    }
    let mut outcomes = Vec::with_capacity(folds.len());
    for &fold in folds {
        if let Some(done) = load_fold(out, fold)? {
            if done.config_hash != config_hash {
                return Err(Error::Results(format!(
                    "fold {fold} in {} was produced by config {}, current config is {config_hash}",
                    out.display(),
                    done.config_hash
                )));
            }
            outcomes.push(done);
            continue;
        }
        let dir = fold_dir(out, fold);
        fs::create_dir_all(&dir).at(&dir)?;
        let (train, val) = corpus.fold(fold)?;
        let metrics = runner.run_fold(fold, &train, &val, &dir)?;
        let outcome = FoldOutcome { fold, config_hash: config_hash.to_string(), metrics, resumed: false };
        let path = dir.join("metrics.json");
        fs::write(&path, serde_json::to_string_pretty(&outcome)?).at(&path)?;
        outcomes.push(outcome);
    }
    Ok(ResultTable { config_hash: config_hash.to_string(), folds: outcomes })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::{synthetic_pipeline_views, TransformSpec};
    use crate::testutil::toy_corpus;

    fn corpus() -> MultiViewCorpus {
        let set = toy_corpus(10, 2, 8, 1);
        let views = synthetic_pipeline_views(&set, &[TransformSpec::Identity, TransformSpec::GaussianSmooth { sigma: 1.0 }], 0).unwrap();
        views.corpus(0, 1, &[0, 1], 3, 0).unwrap()
    }

    #[test]
    fn summary_statistics() {
        let s = MetricSummary::of(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std, s.n), (2.0, Some(1.0), 3));
        assert_eq!(MetricSummary::of(&[0.5]).unwrap().std, None);
        assert!(MetricSummary::of(&[]).is_none());
    }

    #[test]
    fn completed_folds_are_skipped() {
        let c = corpus();
        let dir = tempfile::tempdir().unwrap();
        let mut calls = Vec::new();
        let mut runner = |fold: usize, train: &MultiViewDataset, val: &MultiViewDataset, _: &Path| {
            calls.push(fold);
            Ok(BTreeMap::from([("n".to_string(), (train.len() + val.len()) as f64)]))
        };
        let first = cross_validate(&c, &[0, 1, 2], "h", dir.path(), &mut runner).unwrap();
        fs::remove_dir_all(fold_dir(dir.path(), 1)).unwrap();
        let second = cross_validate(&c, &[0, 1, 2], "h", dir.path(), &mut runner).unwrap();
        assert_eq!(first.summary(), second.summary());
        assert_eq!(second.folds.iter().filter(|f| f.resumed).count(), 2);
        assert!(matches!(cross_validate(&c, &[0], "other", dir.path(), &mut runner), Err(Error::Results(_))));
        assert!(cross_validate(&c, &[3], "h", dir.path(), &mut runner).is_err());
        assert_eq!(calls, vec![0, 1, 2, 1]);
    }
}
