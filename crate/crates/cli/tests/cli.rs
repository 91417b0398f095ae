//! End-to-end runs of the `fcul` binary.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fcul(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fcul"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("spawn fcul")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn gen_small(dir: &Path, out_dir: &str, extra: &[&str]) {
    gen_seeded(dir, out_dir, "5", extra)
}

fn gen_seeded(dir: &Path, out_dir: &str, seed: &str, extra: &[&str]) {
    let mut args = vec!["gen", "--n", "1000", "--d", "12", "--c", "4", "--clients", "10", "--seed", seed];
    args.extend_from_slice(&["--out-dir", out_dir]);
    args.extend_from_slice(extra);
    let out = fcul(&args, dir);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn summary(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn gen_writes_two_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fcul(
        &["gen", "--n", "5000", "--d", "64", "--c", "10", "--clients", "100", "--alpha", "0.3", "--seed", "7"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0);
    let mut names: Vec<_> = std::fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["features.bin", "scenario.json"]);
}

#[test]
fn same_seed_gives_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path(), "x", &[]);
    gen_small(tmp.path(), "y", &[]);
    for name in ["features.bin", "scenario.json"] {
        let a = std::fs::read(tmp.path().join("x").join(name)).unwrap();
        let b = std::fs::read(tmp.path().join("y").join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
    gen_seeded(tmp.path(), "z", "6", &[]);
    assert_ne!(
        std::fs::read(tmp.path().join("x/features.bin")).unwrap(),
        std::fs::read(tmp.path().join("z/features.bin")).unwrap()
    );
}

#[test]
fn invalid_arguments_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    for args in [
        &["gen", "--clients", "0"][..],
        &["gen", "--alpha=-1"],
        &["gen", "--plan", "chunked", "--fraction", "1.5"],
        &["run"],
        &["verify", "--only", "no-such-suite"],
        &["verify", "--tol", "0"],
        &["--jobs", "0", "verify", "--list"],
        &["frobnicate"],
    ] {
        assert_eq!(code(&fcul(args, tmp.path())), 2, "{args:?}");
    }
}

#[test]
fn missing_files_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&fcul(&["run", "--scenario", "absent.json"], tmp.path())), 3);
    assert_eq!(code(&fcul(&["report", "absent"], tmp.path())), 3);
    gen_small(tmp.path(), "s", &[]);
    let other = fcul(&["gen", "--n", "1000", "--d", "8", "--c", "4", "--out-dir", "other"], tmp.path());
    assert_eq!(code(&other), 0);
    // Features from a different generation do not fit the scenario.
    let mismatched = fcul(&["run", "--scenario", "s/scenario.json", "--features", "other/features.bin"], tmp.path());
    assert_eq!(code(&mismatched), 2);
    std::fs::remove_file(tmp.path().join("s/features.bin")).unwrap();
    assert_eq!(code(&fcul(&["run", "--scenario", "s/scenario.json"], tmp.path())), 3);
}

#[test]
fn both_variants_track_the_oracle() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path(), "s", &[]);
    let out = fcul(
        &["run", "--scenario", "s/scenario.json", "--variant", "both", "--precision", "f64", "--out", "r"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&tmp.path().join("r/summary.json"));
    assert_eq!(s["schema_version"], 1);
    assert!(s["final_dev_A"].as_f64().unwrap() <= 1e-9);
    assert!(s["final_dev_B"].as_f64().unwrap() <= 1e-9);
    let events = std::fs::read_to_string(tmp.path().join("r/events.jsonl")).unwrap();
    assert!(events.lines().all(|l| serde_json::from_str::<Value>(l).is_ok()));

    let report = fcul(&["report", "r"], tmp.path());
    assert_eq!(code(&report), 0);
    let text = String::from_utf8(report.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("A ")) && text.lines().any(|l| l.starts_with("B ")));
}

#[test]
fn burst_with_addback_stays_exact() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path(), "s", &["--plan", "burst", "--count", "25", "--addback"]);
    let out = fcul(&["run", "--scenario", "s/scenario.json", "--out", "r"], tmp.path());
    assert_eq!(code(&out), 0);
    let s = summary(&tmp.path().join("r/summary.json"));
    assert_eq!(s["rounds"], 51);
    assert!(s["max_dev_A"].as_f64().unwrap() <= 1e-9);
    assert!(s["max_dev_B"].as_f64().unwrap() <= 1e-9);
}

#[test]
fn approx_reports_bound_and_resets() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path(), "s", &["--plan", "burst", "--count", "20", "--addback"]);
    let out = fcul(
        &["run", "--scenario", "s/scenario.json", "--variant", "approx", "--rank", "8", "--reset-every", "16", "--out", "r"],
        tmp.path(),
    );
    assert_eq!(code(&out), 0);
    let s = summary(&tmp.path().join("r/summary.json"));
    assert!(s["max_bound"].is_f64());
    assert!(s["resets"].as_u64().unwrap() > 0);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path(), "s", &[]);
    std::fs::write(
        tmp.path().join("fcul.toml"),
        "scenario = \"s/scenario.json\"\nprecision = \"f32\"\nvariant = \"a\"\nout = \"from-config\"\n",
    )
    .unwrap();
    let out = fcul(&["--config", "fcul.toml", "run", "--precision", "f64"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&tmp.path().join("from-config/summary.json"));
    assert_eq!(s["precision"], "f64");
    assert!(s["final_dev_A"].is_f64() && s["final_dev_B"].is_null());

    std::fs::write(tmp.path().join("bad.toml"), "gamma = -1.0\n").unwrap();
    assert_eq!(code(&fcul(&["--config", "bad.toml", "run"], tmp.path())), 2);
}

#[test]
fn runs_are_reproducible_across_job_counts() {
    let tmp = tempfile::tempdir().unwrap();
    gen_small(tmp.path(), "s", &["--plan", "burst", "--count", "5", "--addback", "--precision", "f32"]);
    for (jobs, dir) in [("1", "j1"), ("4", "j4")] {
        let out = fcul(&["--jobs", jobs, "run", "--scenario", "s/scenario.json", "--out", dir], tmp.path());
        assert_eq!(code(&out), 0);
    }
    for name in ["metrics.csv", "summary.json", "events.jsonl"] {
        let a = std::fs::read(tmp.path().join("j1").join(name)).unwrap();
        let b = std::fs::read(tmp.path().join("j4").join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
}

#[test]
fn verify_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = fcul(&["verify"], tmp.path());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().count() >= 9 && text.lines().all(|l| l.starts_with("PASS ")));

    let strict = fcul(&["verify", "--tol", "1e-15"], tmp.path());
    assert_eq!(code(&strict), 1);
    let text = String::from_utf8(strict.stdout).unwrap();
    let fail = text.lines().find(|l| l.starts_with("FAIL retrain-equivalence")).expect("reported");
    assert!(fail.contains("max dev"), "{fail}");

    let single = fcul(&["verify", "--only", "downdate-lemma"], tmp.path());
    assert_eq!(code(&single), 0);
    assert_eq!(String::from_utf8(single.stdout).unwrap().lines().count(), 1);
}
