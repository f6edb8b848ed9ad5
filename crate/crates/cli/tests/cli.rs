use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ddopt(out_dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddopt"))
        .arg("--out-dir")
        .arg(out_dir)
        .args(args)
        .output()
        .unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("cli_tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn simulate_writes_report_and_manifest() {
    let dir = scratch("simulate");
    let out = ddopt(&dir, &["simulate", "--seq", "xy4", "--J", "1e-3", "--beta", "1e-6", "--tau-d", "0.1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&dir.join("simulate.json"));
    let d = doc["D"].as_f64().unwrap();
    assert!(d > 0.0 && d < 1e-6, "D = {d}");
    let manifest = json(&dir.join("simulate.manifest.json"));
    assert_eq!(manifest["command"], "simulate");
}

#[test]
fn usage_errors_exit_with_code_2() {
    let dir = scratch("errors");
    // Not cyclic.
    let out = ddopt(&dir, &["simulate", "--seq", "ga4:X,X", "--J", "1e-3", "--beta", "1e-6", "--tau-d", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    // Unknown family.
    let out = ddopt(&dir, &["simulate", "--seq", "nope7", "--J", "1e-3", "--beta", "1e-6", "--tau-d", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
    // Missing width for the finite-width model.
    let out = ddopt(
        &dir,
        &["simulate", "--seq", "xy4", "--model", "finite-width", "--J", "1e-3", "--beta", "1e-6", "--tau-d", "0.1"],
    );
    assert_eq!(out.status.code(), Some(2));
    // Config file with an unknown field.
    let cfg = dir.join("bad.json");
    std::fs::write(&cfg, r#"{"K": 4, "tau_d": 1.0, "J": 1e-4, "beta": 1e-7, "seed": 0, "bogus": 1}"#).unwrap();
    let out = ddopt(&dir, &["optimize", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sequence_file_is_accepted() {
    let dir = scratch("seqfile");
    let file = dir.join("xy4.seq");
    std::fs::write(&file, "# XY4\n0.1:X 0.1:Y\n0.1:X 0.1:Y\n").unwrap();
    let out = ddopt(
        &dir,
        &["simulate", "--seq-file", file.to_str().unwrap(), "--J", "1e-3", "--beta", "1e-6", "--tau-d", "0.1"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn sweep_then_fit_recovers_second_order_for_xy4() {
    let dir = scratch("fit");
    let plan = dir.join("plan.json");
    std::fs::write(
        &plan,
        r#"{"axes": [{"param": "tau_d", "min": 1e-3, "max": 1e-1, "points_per_decade": 3}],
            "fixed": {"J": 1e-3, "beta": 1e-6}, "sequences": ["xy4"], "n_seeds": 3, "seed": 1}"#,
    )
    .unwrap();
    let out = ddopt(&dir, &["sweep", plan.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = dir.join("sweep.csv");
    let out = ddopt(&dir, &["fit", "--csv", csv.to_str().unwrap(), "--sequence", "xy4"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let slope = json(&dir.join("fit.json"))["slope"].as_f64().unwrap();
    assert!((slope - 2.0).abs() < 0.2, "slope {slope}");
}

#[test]
fn heff_shows_flip_error_cancels_little_for_rga2() {
    let dir = scratch("heff");
    let out = ddopt(
        &dir,
        &["heff", "--seq", "rga2", "--model", "flip-angle", "--epsilon", "0.05", "--J", "1e-3", "--beta", "1e-6", "--tau-d", "0.1"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&dir.join("heff.json"));
    let eff = doc["effective"]["channel_norms"][0].as_f64().unwrap();
    let bare = doc["bare_channel_norms"][0].as_f64().unwrap();
    // The x channel is left nearly untouched by a pulse pair about one axis.
    assert!((eff / bare - 1.0).abs() < 0.05, "eff {eff} bare {bare}");
}

#[test]
fn compare_ranks_and_replays() {
    let dir = scratch("compare");
    let out = ddopt(
        &dir,
        &["compare", "--J", "1e-3", "--beta", "1e-6", "--tau-d", "0.1", "--n-seeds", "2", "--seq", "xy4", "--seq", "cdd2", "--seq", "ga8a_level2"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let body = std::fs::read_to_string(dir.join("compare.csv")).unwrap();
    let order: Vec<&str> = body.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(order, ["ga8a_level2", "cdd2", "xy4"]);

    let again = scratch("compare_replay");
    let manifest = dir.join("compare.manifest.json");
    let out = ddopt(&again, &["--jobs", "1", "replay", manifest.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(again.join("compare.csv")).unwrap(), body);
}

#[test]
fn compare_without_sequences_is_a_usage_error() {
    let dir = scratch("compare_empty");
    let out = ddopt(&dir, &["compare", "--J", "1e-3", "--beta", "1e-6", "--tau-d", "0.1"]);
    assert_eq!(out.status.code(), Some(2));
}
