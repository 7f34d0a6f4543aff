use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoders::Paradigm;
use crate::error::{Error, IoContext, Result};
use crate::evaluation::{CKAMatrix, CkaConfig};
use crate::training::{load_fold, MetricSummary};

use super::config::Variant;
use super::run::VARIANT_FILE;

pub const REPORT_DIR: &str = "report";

/// One metric value with its provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub variant: String,
    pub seed: u64,
    pub fold: usize,
    pub metric: String,
    pub value: f64,
}

/// Everything read back from a results directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Collected {
    pub variants: Vec<Variant>,
    pub records: Vec<MetricRecord>,
    /// `variant → per-fold CKA grids`.
    pub cka: BTreeMap<String, Vec<CKAMatrix>>,
}

impl Collected {
    pub fn values(&self, variant: &str, metric: &str) -> Vec<f64> {
        self.records.iter().filter(|r| r.variant == variant && r.metric == metric).map(|r| r.value).collect()
    }

    pub fn summary(&self, variant: &str, metric: &str) -> Option<MetricSummary> {
        MetricSummary::of(&self.values(variant, metric))
    }

    /// Per-seed values of `metric` averaged over folds.
    pub fn seed_means(&self, variant: &str, metric: &str) -> BTreeMap<u64, f64> {
        let mut by_seed: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.variant == variant && r.metric == metric) {
            by_seed.entry(r.seed).or_default().push(r.value);
        }
        by_seed.into_iter().map(|(s, v)| (s, v.iter().sum::<f64>() / v.len() as f64)).collect()
    }

    fn metrics_of(&self, variant: &str) -> Vec<String> {
        let mut m: Vec<String> = self.records.iter().filter(|r| r.variant == variant).map(|r| r.metric.clone()).collect();
        m.sort();
        m.dedup();
        m
    }
}

fn sorted_subdirs(dir: &Path, prefix: &str) -> Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).at(dir)? {
        let path = entry.at(dir)?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else { continue };
        if let Some(id) = name.strip_prefix(prefix).and_then(|s| s.parse::<u64>().ok()) {
            if path.is_dir() {
                out.push((id, path));
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Reads every completed fold under `out`.
pub fn collect(out: &Path) -> Result<Collected> {
    if !out.is_dir() {
        return Err(Error::Results(format!("{} is not a directory", out.display())));
    }
    let mut variants = Vec::new();
    let mut records = Vec::new();
    let mut cka: BTreeMap<String, Vec<CKAMatrix>> = BTreeMap::new();
    let mut entries: Vec<PathBuf> = fs::read_dir(out).at(out)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>().at(out)?;
    entries.sort();
    for vdir in entries.into_iter().filter(|p| p.join(VARIANT_FILE).is_file()) {
        let vpath = vdir.join(VARIANT_FILE);
        let v: Variant = serde_json::from_str(&fs::read_to_string(&vpath).at(&vpath)?)?;
        for (seed, sdir) in sorted_subdirs(&vdir, "seed_")? {
            for (fold, _) in sorted_subdirs(&sdir, "fold_")? {
                let Some(outcome) = load_fold(&sdir, fold as usize)? else { continue };
                for (metric, value) in outcome.metrics {
                    records.push(MetricRecord { variant: v.name.clone(), seed, fold: fold as usize, metric, value });
                }
                let grid = sdir.join(format!("fold_{fold}")).join("cka.csv");
                if grid.exists() {
                    cka.entry(v.name.clone()).or_default().push(CKAMatrix::read_csv(&grid, &CkaConfig::default(), 0)?);
                }
            }
        }
        variants.push(v);
    }
    if records.is_empty() {
        return Err(Error::Results(format!("{} contains no completed folds", out.display())));
    }
    Ok(Collected { variants, records, cka })
}

#[derive(Debug, Clone)]
pub struct Report {
    pub collected: Collected,
    pub files: Vec<PathBuf>,
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn mean_grid(grids: &[CKAMatrix]) -> Option<CKAMatrix> {
    let first = grids.first()?;
    let mut mean = first.clone();
    for (p, row) in mean.values.iter_mut().enumerate() {
        for (q, cell) in row.iter_mut().enumerate() {
            *cell = grids.iter().map(|g| g.values[p][q]).sum::<f64>() / grids.len() as f64;
        }
    }
    mean.k = grids.len();
    Some(mean)
}

/// Writes aggregate tables under `<out>/report/`. A pure function of the
/// fold results in `out`; a metric seen in a single fold gets an empty std.
pub fn emit_report(out: &Path) -> Result<Report> {
    let c = collect(out)?;
    let dir = out.join(REPORT_DIR);
    fs::create_dir_all(&dir).at(&dir)?;
    let mut files = Vec::new();

    let path = dir.join("records.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for r in &c.records {
        w.serialize(r)?;
    }
    w.flush().at(&path)?;
    files.push(path);

    let path = dir.join("metrics_summary.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["variant", "paradigm", "lambda", "metric", "mean", "std", "n"])?;
    for v in &c.variants {
        for metric in c.metrics_of(&v.name) {
            let s = c.summary(&v.name, &metric).expect("metric has values");
            w.write_record([v.name.clone(), v.paradigm.to_string(), fmt(v.lambda), metric, s.mean.to_string(), fmt(s.std), s.n.to_string()])?;
        }
    }
    w.flush().at(&path)?;
    files.push(path);

    for (variant, grids) in &c.cka {
        if let Some(mean) = mean_grid(grids) {
            let path = dir.join(format!("cka_{variant}.csv"));
            mean.write_csv(&path)?;
            files.push(path);
        }
    }

    let path = dir.join("accuracy_table.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["variant", "acc_a_mean", "acc_a_std", "acc_b_mean", "acc_b_std", "n"])?;
    for v in &c.variants {
        if let (Some(a), Some(b)) = (c.summary(&v.name, "acc_a"), c.summary(&v.name, "acc_b")) {
            w.write_record([v.name.clone(), a.mean.to_string(), fmt(a.std), b.mean.to_string(), fmt(b.std), a.n.to_string()])?;
        }
    }
    w.flush().at(&path)?;
    files.push(path);

    let upsl = c.variants.iter().find(|v| v.paradigm == Paradigm::Upsl);
    let pxl: Vec<&Variant> = c.variants.iter().filter(|v| v.paradigm == Paradigm::Pxl).collect();
    if let (Some(u), [p]) = (upsl, pxl.as_slice()) {
        let path = dir.join("upsl_vs_pxl.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["metric", "upsl_mean", "upsl_std", "pxl_mean", "pxl_std", "pxl_minus_upsl"])?;
        for metric in c.metrics_of(&u.name).into_iter().filter(|m| c.metrics_of(&p.name).contains(m)) {
            let (su, sp) = (c.summary(&u.name, &metric).expect("values"), c.summary(&p.name, &metric).expect("values"));
            w.write_record([metric, su.mean.to_string(), fmt(su.std), sp.mean.to_string(), fmt(sp.std), (sp.mean - su.mean).to_string()])?;
        }
        w.flush().at(&path)?;
        files.push(path);
    }

    if pxl.len() > 1 {
        let path = dir.join("lambda_sweep.csv");
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(["lambda", "variant", "acc_a_mean", "acc_a_std", "acc_b_mean", "acc_b_std", "cka_final_mean", "cka_final_std", "n"])?;
        let mut sorted = pxl.clone();
        sorted.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).expect("finite lambdas"));
        for v in sorted {
            let s = |m: &str| c.summary(&v.name, m);
            let (a, b, k) = (s("acc_a"), s("acc_b"), s("cka_final"));
            w.write_record([
                fmt(v.lambda),
                v.name.clone(),
                fmt(a.map(|x| x.mean)),
                fmt(a.and_then(|x| x.std)),
                fmt(b.map(|x| x.mean)),
                fmt(b.and_then(|x| x.std)),
                fmt(k.map(|x| x.mean)),
                fmt(k.and_then(|x| x.std)),
                a.map(|x| x.n.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush().at(&path)?;
        files.push(path);
    }
    Ok(Report { collected: c, files })
}
