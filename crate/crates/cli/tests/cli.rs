use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};
use tempfile::TempDir;

/// Short sinusoid segments so a run takes well under a second per subject.
fn fast_config(extra: Value) -> Value {
    let mut cfg = json!({
        "format": "joint-impedance/1",
        "synth": {"timing": {"ramp_s": 0.1, "sine_s": 2.0, "ramp_down_s": 0.1, "rest_s": 0.0}}
    });
    if let (Some(base), Some(more)) = (cfg.as_object_mut(), extra.as_object()) {
        for (k, v) in more {
            base.insert(k.clone(), v.clone());
        }
    }
    cfg
}

struct Run {
    dir: TempDir,
    config: PathBuf,
}

impl Run {
    fn new(cfg: Value) -> Self {
        let dir = TempDir::new().unwrap();
        let config = dir.path().join("config.json");
        fs::write(&config, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
        Run { dir, config }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn jimp(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_jimp"))
            .args(args)
            .arg("--config")
            .arg(&self.config)
            .arg("--out")
            .arg(self.out())
            .output()
            .unwrap()
    }

    fn ok(&self, args: &[&str]) -> Output {
        let o = self.jimp(args);
        assert!(o.status.success(), "jimp {args:?}: {}", String::from_utf8_lossy(&o.stderr));
        o
    }

    fn json(&self, rel: &str) -> Value {
        serde_json::from_str(&fs::read_to_string(self.out().join(rel)).unwrap()).unwrap()
    }
}

fn files_with_ext(dir: &Path, ext: &str) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == ext))
        .collect();
    v.sort();
    v
}

#[test]
fn synth_default_cohort_has_nine_experiments_and_ninety_periods() {
    let run = Run::new(fast_config(json!({})));
    run.ok(&["synth"]);
    let dir = run.out().join("synth");
    assert_eq!(files_with_ext(&dir, "csv").len(), 9);
    let mut periods = 0;
    for p in files_with_ext(&dir, "json") {
        let v: Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
        if let Some(ps) = v.get("periods") {
            periods += ps.as_array().unwrap().len();
        }
    }
    assert_eq!(periods, 90);
    let header = fs::read_to_string(dir.join("A_exp1.csv")).unwrap();
    assert_eq!(header.lines().next().unwrap(), "t,theta_e,tau_c,tau_s");
    let manifest = run.json("synth/manifest.json");
    assert_eq!(manifest["files"].as_array().unwrap().len(), 19);
}

#[test]
fn synth_ten_subjects() {
    let run = Run::new(fast_config(json!({})));
    run.ok(&["synth", "--subjects", "10"]);
    let dir = run.out().join("synth");
    assert_eq!(files_with_ext(&dir, "csv").len(), 90);
}

#[test]
fn same_seed_gives_identical_manifest() {
    let a = Run::new(fast_config(json!({})));
    let b = Run::new(fast_config(json!({})));
    a.ok(&["synth", "--seed", "7"]);
    b.ok(&["synth", "--seed", "7"]);
    assert_eq!(a.json("synth/manifest.json"), b.json("synth/manifest.json"));
    b.ok(&["synth", "--seed", "8"]);
    assert_ne!(a.json("synth/manifest.json")["files"], b.json("synth/manifest.json")["files"]);
}

#[test]
fn missing_upstream_names_the_verb() {
    let run = Run::new(fast_config(json!({})));
    for (verb, needed) in [("identify", "synth"), ("ftest", "identify"), ("powerlaw", "identify"), ("report", "identify")] {
        let o = run.jimp(&[verb]);
        assert_eq!(o.status.code(), Some(2), "{verb}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(&format!("jimp {needed}")), "{verb}: {err}");
    }
}

#[test]
fn ftest_matches_hand_computed_fixture() {
    let run = Run::new(fast_config(json!({})));
    // Two subjects, two experiments, ten samples each. M1 cells 1.5, M2 and
    // M3 cells 1.0.
    let mut cells = serde_json::Map::new();
    for s in ["P", "Q"] {
        for e in [1, 2] {
            cells.insert(format!("{s}/{e}/M1"), json!(1.5));
            cells.insert(format!("{s}/{e}/M2"), json!(1.0));
            cells.insert(format!("{s}/{e}/M3"), json!(1.0));
        }
    }
    let dir = run.out().join("identify");
    fs::create_dir_all(&dir).unwrap();
    fs::write(dir.join("rss_table.json"), json!({"n": 10, "cells": cells}).to_string()).unwrap();
    run.ok(&["ftest"]);
    let doc = run.json("ftest/ftest.json");
    let all = doc["summary"]["all"].as_array().unwrap();
    // All scope: (6 - 4) / 4 * (16 * 4) / 4 = 8 with df (4, 64).
    let m1 = all.iter().find(|r| r["comparison"] == "M1-vs-M3").unwrap();
    assert!((m1["F"].as_f64().unwrap() - 8.0).abs() < 1e-12);
    assert_eq!(m1["df"], json!([4, 64]));
    let m2 = all.iter().find(|r| r["comparison"] == "M2-vs-M3").unwrap();
    assert_eq!(m2["F"].as_f64().unwrap(), 0.0);
    // Subject scope: (3 - 2) / 2 * 32 / 2 = 8 with df (2, 32).
    let subj = doc["summary"]["per_subject"].as_array().unwrap();
    let p = subj.iter().find(|r| r["scope"]["id"] == "P" && r["comparison"] == "M1-vs-M3").unwrap();
    assert!((p["F"].as_f64().unwrap() - 8.0).abs() < 1e-12);
    assert_eq!(p["df"], json!([2, 32]));
}

#[test]
fn design_with_cohort_constants() {
    let run = Run::new(fast_config(json!({
        "design": {"law": {"type": "power", "beta0": -0.23, "beta1": 0.90, "r2": 0.95}, "k_range": [10.03, 108.33]}
    })));
    run.ok(&["design", "--format", "csv"]);
    let d = run.json("design/design.json");
    let k_p = d["design"]["k_p"].as_f64().unwrap();
    assert_eq!(format!("{k_p:.1}"), "3.2");
    assert!((d["design"]["K_hat"].as_f64().unwrap() - 32.96).abs() < 0.01);
    assert!(run.out().join("design/design.csv").is_file());
}

#[test]
fn infeasible_margin_exits_with_four() {
    let run = Run::new(fast_config(json!({
        "design": {"phi_deg": 40.0, "law": {"type": "power", "beta0": -0.23, "beta1": 0.90, "r2": 0.95}, "k_range": [10.03, 108.33]}
    })));
    let o = run.jimp(&["design"]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn bad_configs_exit_with_two() {
    for cfg in [
        json!({"format": "joint-impedance/1", "sede": 1}),
        json!({"format": "other/9"}),
        json!({"format": "joint-impedance/1", "synth": {"dt": 0.01}}),
    ] {
        let run = Run::new(cfg);
        let o = run.jimp(&["synth"]);
        assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn full_pipeline_report() {
    let run = Run::new(fast_config(json!({"synth": {
        "cohort_size": 3,
        "timing": {"ramp_s": 0.1, "sine_s": 2.0, "ramp_down_s": 0.1, "rest_s": 0.0}
    }})));
    run.ok(&["synth"]);
    let synth_manifest = run.json("synth/manifest.json");
    for verb in ["identify", "ftest", "powerlaw", "design", "analyze", "report"] {
        run.ok(&[verb, "--format", "csv"]);
    }
    let report = run.json("report/report.json");
    assert_eq!(report["format"], "joint-impedance/1");
    let all = report["ftest"]["all"].as_array().unwrap();
    let m1 = all.iter().find(|r| r["comparison"] == "M1-vs-M3").unwrap();
    assert!(m1["F"].as_f64().unwrap() > m1["F_crit"].as_f64().unwrap());
    assert_eq!(m1["significant"], true);
    assert_eq!(report["phase_shifts"].as_array().unwrap().len(), 9);
    assert_eq!(report["parameters"].as_array().unwrap().len(), 3 * 9 * 3);
    for f in ["phase_shifts", "parameters", "ftest", "powerlaw", "design", "amplification"] {
        assert!(run.out().join(format!("report/{f}.csv")).is_file(), "{f}");
    }
    assert!(run.out().join("analyze/bode.csv").is_file());

    // Re-running leaves inputs untouched and reproduces outputs.
    let before = fs::read(run.out().join("identify/rss_table.json")).unwrap();
    run.ok(&["identify"]);
    assert_eq!(before, fs::read(run.out().join("identify/rss_table.json")).unwrap());
    assert_eq!(synth_manifest, run.json("synth/manifest.json"));
}
