//! End-to-end runs of the `nmpl` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn nmpl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nmpl")).args(args).env_remove("NMPL_THREADS").output().unwrap()
}

/// `summary.csv` rows as `(name, value, threshold, pass)`.
fn summary(dir: &Path) -> Vec<(String, String, String, String)> {
    let mut r = csv::Reader::from_path(dir.join("summary.csv")).unwrap();
    r.records()
        .map(|rec| {
            let rec = rec.unwrap();
            (rec[0].to_string(), rec[1].to_string(), rec[2].to_string(), rec[3].to_string())
        })
        .collect()
}

fn row<'a>(rows: &'a [(String, String, String, String)], name: &str) -> &'a (String, String, String, String) {
    rows.iter().find(|r| r.0 == name).unwrap_or_else(|| panic!("no row {name}"))
}

#[test]
fn missing_measure_table_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "command = \"check-measure\"\n").unwrap();
    let out = nmpl(&["check-measure", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("[measure]"), "stderr: {err}");
}

#[test]
fn unknown_command_is_a_usage_error() {
    let out = nmpl(&["frobnicate", "x.toml"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn check_measure_reports_the_integrability_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("check_measure.toml");
    let out = nmpl(&["check-measure", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--seed", "42"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = summary(dir.path());
    assert_eq!(rows[0].0, "seed");
    assert_eq!(rows[0].1, "42");
    // ∫_{|z|≤1} |z|^{0.5} dz + ∫_{|z|>1} |z|^{-2.5} dz = 4 + 4/3.
    let c: f64 = row(&rows, "C_mu_tilde").1.parse().unwrap();
    assert!((c - 16.0 / 3.0).abs() < 1e-8, "{c}");
    assert!(rows.iter().all(|r| r.3 == "true"));
}

#[test]
fn half_line_reachability_does_not_cover() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("half_line_reach.toml");
    let out = nmpl(&["reachability", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap(), "--threads", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = summary(dir.path());
    let cover = row(&rows, "covers_domain");
    assert_eq!(cover.1, "false");
    assert_eq!(cover.3, "true");
    assert!(dir.path().join("mask.csv").exists());
}

#[test]
fn failed_expectation_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let text =
        std::fs::read_to_string(configs().join("half_line_reach.toml")).unwrap().replace("expect_cover = false", "expect_cover = true");
    let cfg = dir.path().join("expect_cover.toml");
    std::fs::write(&cfg, text).unwrap();
    let out = nmpl(&["reachability", cfg.to_str().unwrap(), "--out", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(row(&summary(&dir.path().join("o")), "covers_domain").3, "false");
}

#[test]
fn every_example_config_passes() {
    let dir = tempfile::tempdir().unwrap();
    let mut names: Vec<_> = std::fs::read_dir(configs()).unwrap().map(|e| e.unwrap().path()).collect();
    names.sort();
    for path in names {
        let text = std::fs::read_to_string(&path).unwrap();
        let table: toml::Table = text.parse().unwrap();
        let command = table["command"].as_str().unwrap();
        let out_dir = dir.path().join(path.file_stem().unwrap());
        let out = nmpl(&[command, path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}: {}", path.display(), String::from_utf8_lossy(&out.stderr));
        assert!(summary(&out_dir).iter().all(|r| r.3 == "true"), "{}", path.display());
    }
}
