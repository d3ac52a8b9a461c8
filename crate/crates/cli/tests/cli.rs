//! End-to-end runs of the `hystid` binary on a small manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TINY: &str = "tests/fixtures/tiny.toml";

fn hystid(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hystid"))
        .args(["--log-level", "warn"])
        .args(args)
        .current_dir(env!("CARGO_MANIFEST_DIR"))
        .output()
        .expect("binary runs")
}

fn run_ok(args: &[&str]) {
    let out = hystid(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, acc: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, acc);
            } else {
                acc.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut acc = BTreeMap::new();
    walk(root, root, &mut acc);
    acc
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn stage_by_stage_matches_full_run() {
    let full = tempfile::tempdir().unwrap();
    run_ok(&["run", "-m", TINY, "-o", s(full.path())]);
    let staged = tempfile::tempdir().unwrap();
    for stage in ["simulate", "distort", "bla", "fit", "validate"] {
        run_ok(&[stage, "-m", TINY, "-o", s(staged.path())]);
    }
    let mut a = tree(full.path());
    a.remove(Path::new("run_summary.json"));
    a.remove(Path::new("manifest.toml"));
    let b = tree(staged.path());
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(v == &b[k], "{} differs", k.display());
    }
}

#[test]
fn fit_without_bla_artifact_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    for stage in ["simulate", "bla"] {
        run_ok(&[stage, "-m", TINY, "-o", s(dir.path())]);
    }
    fs::remove_file(dir.path().join("bla/frf.json")).unwrap();
    let out = hystid(&["fit", "-m", TINY, "-o", s(dir.path())]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("frf.json") && err.contains("run `bla` first"), "{err}");
    let status = fs::read_to_string(dir.path().join("status.json")).unwrap();
    assert!(status.contains("\"failed\""), "{status}");
}

#[test]
fn validate_on_a_persisted_model_reproduces_the_report() {
    let dir = tempfile::tempdir().unwrap();
    run_ok(&["run", "-m", TINY, "-o", s(dir.path())]);
    let model = dir.path().join("pnlss/d2-3.json");
    let out = hystid(&["validate", "-m", TINY, "-o", s(dir.path()), "--model", s(&model)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stored = fs::read_to_string(dir.path().join("validation/d2-3.json")).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap(), stored);
}

#[test]
fn newer_manifest_schema_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join(TINY)).unwrap();
    let path = dir.path().join("future.toml");
    fs::write(&path, text.replacen("schema_version = 1", "schema_version = 7", 1)).unwrap();
    let out = hystid(&["simulate", "-m", s(&path), "-o", s(&dir.path().join("out"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("newer"));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn missing_output_dir_is_a_config_error() {
    let out = hystid(&["simulate", "-m", TINY]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_degree_sets_stop_after_linear_identification() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join(TINY)).unwrap();
    let text = text
        .replace("degree_sets = [[3], [2, 3]]", "degree_sets = []")
        .replace("degree_sets = [[3]]", "degree_sets = []");
    let path = dir.path().join("linear_only.toml");
    fs::write(&path, text).unwrap();
    let out_dir = dir.path().join("out");
    run_ok(&["run", "-m", s(&path), "-o", s(&out_dir)]);
    assert!(out_dir.join("linear/selected.json").exists());
    assert!(!out_dir.join("pnlss").exists());
    assert!(!out_dir.join("validation").exists());
    let status = fs::read_to_string(out_dir.join("status.json")).unwrap();
    assert_eq!(status.matches("\"skipped\"").count(), 2, "{status}");
}

#[test]
fn distort_writes_one_report_per_amplitude() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join(TINY)).unwrap();
    let text = text.replace("amplitudes_rms_n = [1.0, 50.0]", "amplitudes_rms_n = [1.0, 10.0, 25.0, 50.0]");
    let path = dir.path().join("distort.toml");
    fs::write(&path, text).unwrap();
    let out_dir = dir.path().join("out");
    run_ok(&["distort", "-m", s(&path), "-o", s(&out_dir)]);
    for a in ["a1", "a10", "a25", "a50"] {
        let csv = fs::read_to_string(out_dir.join(format!("distortion/{a}.csv"))).unwrap();
        assert!(csv.starts_with("bin,frequency_hz,class,level_db"));
        assert!(csv.contains("odd_detection") && csv.contains("even_detection"));
        assert!(out_dir.join(format!("distortion/{a}.json")).exists());
    }
}
