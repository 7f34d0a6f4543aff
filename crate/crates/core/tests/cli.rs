//! The `pipeinv` binary end to end on the smoke config.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn pipeinv(cache: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pipeinv")).env("PIPEINV_CACHE", cache).args(args).output().unwrap()
}

fn text(o: &Output) -> (String, String) {
    (String::from_utf8_lossy(&o.stdout).into_owned(), String::from_utf8_lossy(&o.stderr).into_owned())
}

#[test]
fn out_of_range_lambda_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let smoke = std::fs::read_to_string(configs().join("smoke.toml")).unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, format!("{smoke}\n[objective]\nlambda = 1.5\n")).unwrap();
    let o = pipeinv(&dir.path().join("cache"), &["run", "--config", bad.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    let (_, err) = text(&o);
    assert_eq!(o.status.code(), Some(2), "{err}");
    assert!(err.contains("objective.lambda"), "{err}");
}

#[test]
fn missing_config_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let o = pipeinv(dir.path(), &["run", "--config", dir.path().join("absent.toml").to_str().unwrap()]);
    assert!(!o.status.success());
}

#[test]
fn run_rerun_report_cka_probe() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let out = dir.path().join("out");
    let (cfg, out_s) = (configs().join("smoke.toml"), out.to_str().unwrap().to_owned());
    let cfg_s = cfg.to_str().unwrap();

    let o = pipeinv(&cache, &["dataset", "build", "--config", cfg_s]);
    assert!(o.status.success(), "{:?}", text(&o));
    assert!(text(&o).0.starts_with("built"));

    let o = pipeinv(&cache, &["run", "--config", cfg_s, "--out", &out_s, "--seed", "0", "--folds", "0"]);
    let (stdout, stderr) = text(&o);
    assert!(o.status.success(), "{stderr}");
    assert!(stdout.contains("complete: results in"), "{stdout}");
    assert!(stdout.contains("pxl"));

    let o = pipeinv(&cache, &["run", "--config", cfg_s, "--out", &out_s, "--seed", "0", "--folds", "0"]);
    assert!(o.status.success());
    assert!(text(&o).0.contains("nothing to do"));

    let o = pipeinv(&cache, &["report", "--out", &out_s]);
    assert!(o.status.success(), "{:?}", text(&o));
    assert!(out.join("report/metrics_summary.csv").is_file());
    assert!(out.join("report/upsl_vs_pxl.csv").is_file());

    let o = pipeinv(&cache, &["cka", "--out", &out_s, "--variant", "pxl"]);
    let (stdout, stderr) = text(&o);
    assert!(o.status.success(), "{stderr}");
    assert!(stdout.lines().count() > 2, "{stdout}");

    let dest = dir.path().join("probe.json");
    let o = pipeinv(&cache, &["probe", "--out", &out_s, "--variant", "upsl", "--dest", dest.to_str().unwrap()]);
    assert!(o.status.success(), "{:?}", text(&o));
    let probe: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&dest).unwrap()).unwrap();
    for key in ["probe_a_to_b", "probe_b_to_a"] {
        let acc = probe[key]["accuracy"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&acc));
    }

    let o = pipeinv(&cache, &["cka", "--out", &out_s, "--variant", "nope"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn foreign_results_are_refused_on_resume() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let out = dir.path().join("out");
    let cfg = configs().join("smoke.toml");
    let o = pipeinv(&cache, &["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let o = pipeinv(&cache, &["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "7", "--resume"]);
    assert_eq!(o.status.code(), Some(1), "{:?}", text(&o));
}
