use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clutterbench"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn preset(name: &str) -> Value {
    let out = run(&["preset", name]);
    assert!(out.status.success());
    serde_json::from_slice(&out.stdout).unwrap()
}

/// Reference scene shrunk to 512 samples x 64 chirps x `scans` scans.
fn small_scenario(dir: &Path, scans: u64) -> PathBuf {
    let mut s = preset("reference");
    s["radar"]["samples_per_chirp"] = 512.into();
    s["radar"]["chirps_per_scan"] = 64.into();
    s["radar"]["scan_count"] = scans.into();
    let path = dir.join("scenario.json");
    fs::write(&path, serde_json::to_string_pretty(&s).unwrap()).unwrap();
    path
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn simulate_writes_scans_maps_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let scenario = small_scenario(tmp.path(), 3);
    let out = tmp.path().join("sim");
    let res = run(&["simulate", "--scenario", s(&scenario), "--out", s(&out), "--seed", "9"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for k in 0..3 {
        let scan = fs::read(out.join(format!("scan_{k:02}.bin"))).unwrap();
        assert_eq!(scan.len(), 8 + 512 * 64 * 8);
        assert!(out.join(format!("raw_map_{k:02}.csv")).exists());
    }
    assert!(!out.join("scan_03.bin").exists());
    let manifest = read_json(&out.join("manifest.json"));
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["scenario"]["seed"], 9);
    assert_eq!(manifest["scenario"]["radar"]["scan_count"], 3);
}

#[test]
fn single_scan_gives_single_file() {
    let tmp = TempDir::new().unwrap();
    let scenario = small_scenario(tmp.path(), 1);
    let out = tmp.path().join("sim");
    assert!(run(&["simulate", "--scenario", s(&scenario), "--out", s(&out)]).status.success());
    let scans = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".bin"))
        .count();
    assert_eq!(scans, 1);
}

#[test]
fn map_csv_has_header_and_one_row_per_cell() {
    let tmp = TempDir::new().unwrap();
    let scenario = small_scenario(tmp.path(), 1);
    let out = tmp.path().join("sim");
    assert!(run(&["simulate", "--scenario", s(&scenario), "--out", s(&out)]).status.success());
    let text = fs::read_to_string(out.join("raw_map_00.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("range_bin,velocity_bin,magnitude_db_normalized"));
    assert_eq!(lines.count(), 512 * 64);
    assert!(!text.contains('\r'));
}

#[test]
fn unwritable_output_is_a_runtime_error_naming_the_path() {
    let tmp = TempDir::new().unwrap();
    let scenario = small_scenario(tmp.path(), 1);
    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let res = run(&["simulate", "--scenario", s(&scenario), "--out", s(&out)]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains(s(&out)));
}

#[test]
fn invalid_scenario_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let mut bad = preset("reference");
    bad["radar"]["bandwidth_hz"] = (-1.0).into();
    let path = tmp.path().join("bad.json");
    fs::write(&path, bad.to_string()).unwrap();
    let res = run(&["simulate", "--scenario", s(&path), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(res.status.code(), Some(2));

    fs::write(&path, "{ not json").unwrap();
    let res = run(&["simulate", "--scenario", s(&path), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn detect_godec_reports_all_metrics() {
    let tmp = TempDir::new().unwrap();
    let scenario = small_scenario(tmp.path(), 3);
    let out = tmp.path().join("det");
    let res = run(&["detect", "--scenario", s(&scenario), "--scheme", "godec_ca", "--out", s(&out), "--nmov", "4"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let report = read_json(&out.join("report.json"));
    for key in ["p_d", "n_fa", "iter_cov", "f"] {
        assert!(report[key].is_number(), "{key} missing");
    }
    assert!(report["iter_cov"].as_u64().unwrap() >= 1);
    assert_eq!(report["n_mov"], 4);
    let grid = fs::read(out.join("map_db_00.f32")).unwrap();
    assert_eq!(grid.len(), 8 + 4 * 512 * 64);
    assert!(fs::read_to_string(out.join("masks.csv")).unwrap().starts_with("scan,range_bin,velocity_bin\n"));
    assert!(out.join("godec_trace.csv").exists());
}

#[test]
fn detect_mti_has_zero_iterations() {
    let tmp = TempDir::new().unwrap();
    let scenario = small_scenario(tmp.path(), 2);
    let out = tmp.path().join("det");
    assert!(run(&["detect", "--scenario", s(&scenario), "--scheme", "mti_ca", "--out", s(&out)]).status.success());
    let report = read_json(&out.join("report.json"));
    assert_eq!(report["iter_cov"], 0);
    assert!(report["f"].is_null());
    // delay-line cancellation leaves N - 1 Doppler columns
    assert_eq!(fs::read(out.join("map_db_00.f32")).unwrap().len(), 8 + 4 * 512 * 63);
}

#[test]
fn bad_scheme_lists_valid_names() {
    let tmp = TempDir::new().unwrap();
    let scenario = small_scenario(tmp.path(), 1);
    let res = run(&["detect", "--scenario", s(&scenario), "--scheme", "fancy", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    for name in ["raw_ca", "raw_os", "mti_ca", "mti_os", "godec_ca"] {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn rerun_from_manifest_is_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let scenario = small_scenario(tmp.path(), 2);
    let first = tmp.path().join("a");
    let second = tmp.path().join("b");
    assert!(run(&["detect", "--scenario", s(&scenario), "--scheme", "raw_os", "--out", s(&first), "--seed", "5"]).status.success());
    let manifest = first.join("manifest.json");
    assert!(run(&["detect", "--scenario", s(&manifest), "--scheme", "raw_os", "--out", s(&second)]).status.success());
    for name in ["manifest.json", "masks.csv", "map_db_00.f32", "map_db_01.f32"] {
        assert_eq!(fs::read(first.join(name)).unwrap(), fs::read(second.join(name)).unwrap(), "{name}");
    }
}

#[test]
fn sweep_writes_rows_and_recommendation() {
    let tmp = TempDir::new().unwrap();
    let scenario = small_scenario(tmp.path(), 2);
    let out = tmp.path().join("sweep");
    let res = run(&["sweep", "--scenario", s(&scenario), "--nmov", "1,3", "--repeats", "2", "--out", s(&out)]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("nmov,repeat,n_fa,p_d,iter_cov,f,f_mean"));
    assert_eq!(lines.count(), 4);
    let manifest = read_json(&out.join("manifest.json"));
    let optimum = manifest["recommendation"]["optimum"].as_u64().unwrap();
    assert!([1, 3].contains(&optimum));
    assert!(!manifest["recommendation"]["band"].as_array().unwrap().is_empty());
}

#[test]
fn sweep_single_value_gives_one_row() {
    let tmp = TempDir::new().unwrap();
    let scenario = small_scenario(tmp.path(), 2);
    let out = tmp.path().join("sweep");
    assert!(run(&["sweep", "--scenario", s(&scenario), "--nmov", "2", "--repeats", "1", "--out", s(&out)]).status.success());
    assert_eq!(fs::read_to_string(out.join("sweep.csv")).unwrap().lines().count(), 2);
    assert_eq!(read_json(&out.join("manifest.json"))["recommendation"]["optimum"], 2);
}

#[test]
fn sweep_rejects_empty_list() {
    let tmp = TempDir::new().unwrap();
    let scenario = small_scenario(tmp.path(), 1);
    let res = run(&["sweep", "--scenario", s(&scenario), "--nmov", "", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn bench_rejects_zero_repeats() {
    let tmp = TempDir::new().unwrap();
    let scenario = small_scenario(tmp.path(), 1);
    let res = run(&["bench", "--scenario", s(&scenario), "--repeats", "0", "--out", s(&tmp.path().join("o"))]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn bench_reports_mti_flops_at_full_size() {
    let tmp = TempDir::new().unwrap();
    let mut scene = preset("reference");
    scene["radar"]["scan_count"] = 1.into();
    let path = tmp.path().join("reference.json");
    fs::write(&path, scene.to_string()).unwrap();
    let out = tmp.path().join("bench");
    let res = run(&["bench", "--scenario", s(&path), "--repeats", "1", "--scheme", "mti_ca", "--out", s(&out), "--threads", "2"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let csv = fs::read_to_string(out.join("timing.csv")).unwrap();
    assert!(csv.starts_with("scheme,stage,mean_seconds,flops\n"));
    let mti = csv.lines().find(|l| l.starts_with("mti_ca,mti,")).unwrap();
    assert!(mti.ends_with(",261120"), "{mti}");
    assert_eq!(read_json(&out.join("manifest.json"))["repeats"], 1);
}
