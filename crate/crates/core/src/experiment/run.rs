use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::datasets::{MultiViewDataset, SingleView, View};
use crate::encoders::{Paradigm, TrainedModel};
use crate::error::{Error, IoContext, Result};
use crate::evaluation::{accuracy, all_layers, cka_matrix, linear_probe_transfer, mutual_agreement, PredictionSet};
use crate::training::{config_hash, cross_validate, predict_labels, train_mpsl, train_pxl, train_upsl, RunRecord, ResultTable};

use super::config::{ExperimentConfig, Variant};
use super::data::{build_or_load, CachedCorpus};
use super::report::emit_report;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const VARIANT_FILE: &str = "variant.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Complete,
}

/// Provenance of one experiment output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub name: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub dataset_dir: PathBuf,
    pub dataset_fingerprint: String,
    pub seeds: Vec<u64>,
    pub folds: Vec<usize>,
    pub variants: Vec<Variant>,
    pub software_version: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
    pub status: RunStatus,
    /// Files produced, relative to the output directory.
    pub outputs: Vec<String>,
}

impl ExperimentManifest {
    pub fn load(out: &Path) -> Result<Option<Self>> {
        let path = out.join(MANIFEST_NAME);
        if !path.exists() {
            return Ok(None);
        }
        Ok(Some(serde_json::from_str(&fs::read_to_string(&path).at(&path)?)?))
    }

    fn save(&self, out: &Path) -> Result<()> {
        let path = out.join(MANIFEST_NAME);
        fs::write(&path, serde_json::to_string_pretty(self)?).at(&path)
    }
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub cache_root: PathBuf,
    /// Continue a partially completed directory.
    pub resume: bool,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub out: PathBuf,
    pub manifest: ExperimentManifest,
    /// The directory already held a complete run; nothing was trained.
    pub already_complete: bool,
    /// `(variant, seed) → per-fold results`.
    pub tables: BTreeMap<(String, u64), ResultTable>,
}

/// Directory of one variant's runs.
pub fn variant_dir(out: &Path, variant: &str) -> PathBuf {
    out.join(variant)
}

pub fn seed_dir(out: &Path, variant: &str, seed: u64) -> PathBuf {
    variant_dir(out, variant).join(format!("seed_{seed}"))
}

/// Hash identifying the runs of one `(variant, seed)`: training settings,
/// dataset content and evaluation settings.
pub fn run_hash(cfg: &ExperimentConfig, v: &Variant, seed: u64, dataset_fingerprint: &str) -> Result<String> {
    let train = cfg.train_config(v, seed, 0)?;
    Ok(config_hash(&serde_json::json!({
        "train": train,
        "dataset": dataset_fingerprint,
        "evaluation": cfg.evaluation,
    })))
}

/// Builds or loads the dataset, trains every variant × seed × fold (skipping
/// completed folds), evaluates on the hold-out split and emits the report.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    let hash = cfg.hash();
    let out = opts.out.clone();
    let previous = ExperimentManifest::load(&out)?;
    if let Some(m) = &previous {
        if m.config_hash != hash {
            return Err(Error::Results(format!(
                "{} holds results of config {}, this config is {hash}; choose another --out",
                out.display(),
                m.config_hash
            )));
        }
        if m.status == RunStatus::Complete {
            return Ok(RunOutcome { out, manifest: m.clone(), already_complete: true, tables: BTreeMap::new() });
        }
        if !opts.resume {
            return Err(Error::Results(format!("{} holds a partially completed run; pass --resume to continue it", out.display())));
        }
    } else if out.exists() && fs::read_dir(&out).at(&out)?.next().is_some() && !opts.resume {
        return Err(Error::Results(format!("{} is not empty and has no experiment manifest", out.display())));
    }
    fs::create_dir_all(&out).at(&out)?;
    let CachedCorpus { corpus, manifest: dm, dir: dataset_dir, .. } = build_or_load(&cfg.dataset, &opts.cache_root)?;
    let folds = cfg.folds();
    let variants = cfg.variants();
    let mut manifest = ExperimentManifest {
        name: cfg.name.clone(),
        config_hash: hash,
        config: serde_json::to_value(cfg)?,
        dataset_dir,
        dataset_fingerprint: dm.fingerprint(),
        seeds: cfg.seeds.clone(),
        folds: folds.clone(),
        variants: variants.clone(),
        software_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: previous.as_ref().map_or_else(now, |m| m.started_unix),
        finished_unix: None,
        status: RunStatus::Running,
        outputs: vec![],
    };
    let snapshot = out.join("config.toml");
    fs::write(&snapshot, cfg.to_toml()).at(&snapshot)?;
    manifest.save(&out)?;

    let mut tables = BTreeMap::new();
    for v in &variants {
        let vdir = variant_dir(&out, &v.name);
        fs::create_dir_all(&vdir).at(&vdir)?;
        let vpath = vdir.join(VARIANT_FILE);
        fs::write(&vpath, serde_json::to_string_pretty(v)?).at(&vpath)?;
        for &seed in &cfg.seeds {
            let rh = run_hash(cfg, v, seed, &manifest.dataset_fingerprint)?;
            let test = &corpus.test;
            let mut runner = |fold: usize, train: &MultiViewDataset, val: &MultiViewDataset, dir: &Path| {
                run_fold(cfg, v, seed, fold, train, val, test, dir)
                    .map_err(|e| Error::Results(format!("variant {} seed {seed} fold {fold}: {e}", v.name)))
            };
            let table = cross_validate(&corpus, &folds, &rh, &seed_dir(&out, &v.name, seed), &mut runner)?;
            tables.insert((v.name.clone(), seed), table);
        }
    }
    let report = emit_report(&out)?;
    manifest.outputs = collect_outputs(&out, &report.files)?;
    manifest.finished_unix = Some(now());
    manifest.status = RunStatus::Complete;
    manifest.save(&out)?;
    Ok(RunOutcome { out, manifest, already_complete: false, tables })
}

fn collect_outputs(out: &Path, report_files: &[PathBuf]) -> Result<Vec<String>> {
    let mut files = Vec::new();
    let mut stack = vec![out.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).at(&dir)? {
            let path = entry.at(&dir)?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n != MANIFEST_NAME) {
                files.push(path);
            }
        }
    }
    for f in report_files {
        if !f.exists() {
            return Err(Error::Results(format!("report file {} missing at emit time", f.display())));
        }
    }
    let mut rel: Vec<String> = files.iter().map(|p| p.strip_prefix(out).unwrap_or(p).to_string_lossy().into_owned()).collect();
    rel.sort();
    Ok(rel)
}

fn save_record(record: &RunRecord, dir: &Path, suffix: &str) -> Result<()> {
    record.write_csv(&dir.join(format!("log{suffix}.csv")))?;
    let path = dir.join(format!("run{suffix}.json"));
    fs::write(&path, serde_json::to_string_pretty(record)?).at(&path)
}

fn save_model(model: &TrainedModel, record: &mut RunRecord, dir: &Path, file: &str) -> Result<()> {
    model.save(&dir.join(file))?;
    record.checkpoint = Some(file.to_string());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_fold(
    cfg: &ExperimentConfig,
    v: &Variant,
    seed: u64,
    fold: usize,
    train: &MultiViewDataset,
    val: &MultiViewDataset,
    test: &MultiViewDataset,
    dir: &Path,
) -> Result<BTreeMap<String, f64>> {
    let tc = cfg.train_config(v, seed, fold)?;
    let mut metrics = BTreeMap::new();
    let (model_a, model_b) = match v.paradigm {
        Paradigm::Upsl => {
            let mut trained = Vec::new();
            for view in [View::A, View::B] {
                let (model, mut record) = train_upsl(&train.distinct_view(view), Some(&val.distinct_view(view)), view, &tc)?;
                save_model(&model, &mut record, dir, &format!("model_{}.zip", view.name()))?;
                save_record(&record, dir, &format!("_{}", view.name()))?;
                metrics.insert(format!("train_seconds_{}", view.name()), record.wall_clock_secs);
                if let Some(a) = record.final_epoch().val_acc {
                    metrics.insert(format!("val_acc_{}", view.name()), a);
                }
                trained.push(model);
            }
            let b = trained.pop().expect("two models");
            (trained.pop().expect("two models"), b)
        }
        Paradigm::Mpsl => {
            let (model, mut record) = train_mpsl(train, Some(val), &tc)?;
            save_model(&model, &mut record, dir, "model.zip")?;
            save_record(&record, dir, "")?;
            metrics.insert("train_seconds".into(), record.wall_clock_secs);
            (model.clone(), model)
        }
        Paradigm::Pxl => {
            let (pair, mut record) = train_pxl(train, Some(val), &tc)?;
            pair.a.save(&dir.join("model_a.zip"))?;
            pair.b.save(&dir.join("model_b.zip"))?;
            record.checkpoint = Some("model_a.zip,model_b.zip".into());
            save_record(&record, dir, "")?;
            metrics.insert("train_seconds".into(), record.wall_clock_secs);
            let last = record.final_epoch();
            if let (Some(a), Some(b)) = (last.val_acc, last.val_acc_b) {
                metrics.insert("val_acc_a".into(), a);
                metrics.insert("val_acc_b".into(), b);
            }
            (pair.a, pair.b)
        }
    };
    metrics.extend(evaluate_models(cfg, v, &model_a, &model_b, train, test, dir)?);
    Ok(metrics)
}

/// Per-pair predictions of a model, computed once per distinct sample.
fn pair_predictions(model: &TrainedModel, data: &MultiViewDataset, view: View, id: &str) -> Result<(PredictionSet, f64)> {
    let distinct = data.distinct_view(view);
    let predicted = predict_labels(model, &distinct)?;
    let within = accuracy(&PredictionSet::from_labels(predicted.clone(), distinct.labels.clone(), id)?)?;
    let row_of = |r: usize| distinct.rows.binary_search(&r).expect("row present in its distinct view");
    let per_pair: Vec<usize> = data
        .pairs()
        .iter()
        .map(|p| predicted[row_of(if view == View::A { p.a } else { p.b })])
        .collect();
    Ok((PredictionSet::from_labels(per_pair, data.labels().to_vec(), id)?, within))
}

fn head(view: SingleView, n: Option<usize>) -> SingleView {
    match n {
        Some(n) => view.head(n),
        None => view,
    }
}

/// Hold-out accuracy per view, mutual agreement, CKA grid and transfer probes.
pub fn evaluate_models(
    cfg: &ExperimentConfig,
    v: &Variant,
    model_a: &TrainedModel,
    model_b: &TrainedModel,
    train: &MultiViewDataset,
    test: &MultiViewDataset,
    dir: &Path,
) -> Result<BTreeMap<String, f64>> {
    let mut m = BTreeMap::new();
    let (pa, acc_a) = pair_predictions(model_a, test, View::A, "a")?;
    let (pb, acc_b) = pair_predictions(model_b, test, View::B, "b")?;
    m.insert("acc_a".into(), acc_a);
    m.insert("acc_b".into(), acc_b);
    m.insert("agreement".into(), mutual_agreement(&pa, &pb)?);

    let ev = &cfg.evaluation;
    if ev.cka.enabled {
        let (ta, tb) = (head(test.single_view(View::A), ev.cka.max_samples), head(test.single_view(View::B), ev.cka.max_samples));
        let (la, lb) = (all_layers(model_a), all_layers(model_b));
        let grid = cka_matrix(model_a, model_b, &ta, &tb, &la, &lb, &ev.cka.config())?;
        grid.write_csv(&dir.join("cka.csv"))?;
        for (&p, &q) in la.iter().zip(&lb) {
            m.insert(format!("cka_layer_{p}"), grid.get(p, q).expect("layer present"));
        }
        m.insert("cka_final".into(), grid.get(*la.last().expect("layers"), *lb.last().expect("layers")).expect("layer present"));
    }
    if ev.probe.enabled && v.paradigm != Paradigm::Mpsl {
        for (name, model, view) in [("probe_a_to_b", model_a, View::B), ("probe_b_to_a", model_b, View::A)] {
            let report = linear_probe_transfer(model, &train.distinct_view(view), &test.distinct_view(view), &ev.probe.solver)?;
            let path = dir.join(format!("{name}.json"));
            fs::write(&path, serde_json::to_string_pretty(&report)?).at(&path)?;
            m.insert(name.into(), report.accuracy);
        }
    }
    Ok(m)
}

/// A finished or partial results directory opened for re-analysis.
#[derive(Debug, Clone)]
pub struct ResultsDir {
    pub out: PathBuf,
    pub config: ExperimentConfig,
    pub manifest: ExperimentManifest,
}

impl ResultsDir {
    pub fn open(out: &Path) -> Result<Self> {
        let manifest = ExperimentManifest::load(out)?.ok_or_else(|| Error::Results(format!("{} has no {MANIFEST_NAME}", out.display())))?;
        let config = ExperimentConfig::load(&out.join("config.toml"))?;
        Ok(ResultsDir { out: out.to_path_buf(), config, manifest })
    }

    pub fn variant(&self, name: &str) -> Result<Variant> {
        self.manifest.variants.iter().find(|v| v.name == name).cloned().ok_or_else(|| {
            let known: Vec<&str> = self.manifest.variants.iter().map(|v| v.name.as_str()).collect();
            Error::Results(format!("no variant `{name}` in {}; known: {}", self.out.display(), known.join(", ")))
        })
    }

    /// The two view models of one fold run; MPSL yields its single model twice.
    pub fn models(&self, variant: &str, seed: u64, fold: usize) -> Result<(TrainedModel, TrainedModel)> {
        let dir = seed_dir(&self.out, variant, seed).join(format!("fold_{fold}"));
        if self.variant(variant)?.paradigm == Paradigm::Mpsl {
            let m = TrainedModel::load(&dir.join("model.zip"))?;
            return Ok((m.clone(), m));
        }
        Ok((TrainedModel::load(&dir.join("model_a.zip"))?, TrainedModel::load(&dir.join("model_b.zip"))?))
    }

    /// The cached dataset of this run, loaded (or rebuilt) under `cache_root`.
    pub fn corpus(&self, cache_root: &Path) -> Result<crate::datasets::MultiViewCorpus> {
        let cached = build_or_load(&self.config.dataset, cache_root)?;
        if cached.manifest.fingerprint() != self.manifest.dataset_fingerprint {
            return Err(Error::Results(format!("dataset at {} differs from the one this run used", cached.dir.display())));
        }
        Ok(cached.corpus)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TINY: &str = r#"
name = "tiny"
seeds = [3]
folds = [0]

[dataset]
kind = "synthetic"
transforms = [{ name = "identity" }, { name = "gaussian_smooth", sigma = 1.0 }]
image_size = 12
holdout_per_class = 4
fold_count = 2
subsample = 0.04
seed = 2

[training]
paradigms = ["upsl", "mpsl", "pxl"]
epochs = 2
batch_size = 16
learning_rate = 0.002
optimizer = "adam"
encoder = { preset = "compact" }

[evaluation.cka]
batch_size = 8
max_samples = 32

[evaluation.probe.solver]
max_iter = 50
"#;

    fn opts(root: &Path, resume: bool) -> RunOptions {
        RunOptions { out: root.join("out"), cache_root: root.join("cache"), resume }
    }

    #[test]
    fn end_to_end_then_complete_then_mismatch() {
        let root = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::from_toml(TINY).unwrap();
        let first = run_experiment(&cfg, &opts(root.path(), false)).unwrap();
        assert!(!first.already_complete);
        assert_eq!(first.manifest.status, RunStatus::Complete);
        let names: Vec<&str> = first.manifest.variants.iter().map(|v| v.name.as_str()).collect();
        assert_eq!(names, vec!["upsl", "mpsl", "pxl"]);
        let upsl = &first.tables[&("upsl".to_string(), 3)].folds[0];
        for key in ["acc_a", "acc_b", "agreement", "cka_final", "probe_a_to_b", "probe_b_to_a"] {
            assert!(upsl.metrics.contains_key(key), "missing {key}");
        }
        assert!(!first.tables[&("mpsl".to_string(), 3)].folds[0].metrics.contains_key("probe_a_to_b"));
        for f in ["config.toml", "report/metrics_summary.csv", "report/upsl_vs_pxl.csv", "upsl/seed_3/fold_0/model_a.zip", "mpsl/seed_3/fold_0/model.zip"] {
            assert!(first.manifest.outputs.iter().any(|o| o == f), "missing {f}");
        }

        let opened = ResultsDir::open(&root.path().join("out")).unwrap();
        let (a, b) = opened.models("pxl", 3, 0).unwrap();
        assert_ne!(a.parameter_hash(), b.parameter_hash());
        assert!(opened.models("pxl", 3, 1).is_err());
        assert!(opened.variant("nope").is_err());
        assert_eq!(opened.corpus(&root.path().join("cache")).unwrap().test.len(), 40);

        let again = run_experiment(&cfg, &opts(root.path(), false)).unwrap();
        assert!(again.already_complete);

        let mut other = cfg.clone();
        other.training.epochs = 3;
        assert!(matches!(run_experiment(&other, &opts(root.path(), true)), Err(Error::Results(_))));
    }

    #[test]
    fn resume_skips_finished_folds() {
        let root = tempfile::tempdir().unwrap();
        let mut cfg = ExperimentConfig::from_toml(TINY).unwrap();
        cfg.training.paradigms = vec![Paradigm::Upsl];
        cfg.evaluation.probe.enabled = false;
        run_experiment(&cfg, &opts(root.path(), false)).unwrap();
        // Simulate an interruption: mark the run unfinished.
        let out = root.path().join("out");
        let mut m = ExperimentManifest::load(&out).unwrap().unwrap();
        m.status = RunStatus::Running;
        m.save(&out).unwrap();
        assert!(run_experiment(&cfg, &opts(root.path(), false)).is_err());
        let resumed = run_experiment(&cfg, &opts(root.path(), true)).unwrap();
        assert!(resumed.tables[&("upsl".to_string(), 3)].folds[0].resumed);
        assert_eq!(resumed.manifest.status, RunStatus::Complete);
    }

    #[test]
    fn foreign_directory_is_refused() {
        let root = tempfile::tempdir().unwrap();
        fs::create_dir_all(root.path().join("out")).unwrap();
        fs::write(root.path().join("out/notes.txt"), "x").unwrap();
        let cfg = ExperimentConfig::from_toml(TINY).unwrap();
        assert!(matches!(run_experiment(&cfg, &opts(root.path(), false)), Err(Error::Results(_))));
    }
}
