//! Runs the `monofem` binary on tiny configs and pins output names, CSV headers and row
//! counts against `tests/golden/`. Set `UPDATE_GOLDEN=1` to rewrite the golden files.

use std::path::{Path, PathBuf};
use std::process::Command;

fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn monofem(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_monofem")).args(args).env("RUST_LOG", "error").output().unwrap()
}

/// One line per output file: name, then header and data-row count for CSVs.
fn layout(dir: &Path) -> String {
    let mut names: Vec<String> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    let mut out = String::new();
    for name in names {
        let text = std::fs::read_to_string(dir.join(&name)).unwrap();
        if name.ends_with(".csv") {
            let header = text.lines().next().unwrap_or("");
            out.push_str(&format!("{name}: {header} ({} rows)\n", text.lines().count() - 1));
        } else {
            out.push_str(&format!("{name}\n"));
        }
    }
    out
}

fn check(experiment: &str, config: &str, golden: &str) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = manifest_dir().join("tests/fixtures").join(config);
    let out = monofem(&[experiment, "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let got = layout(dir.path());
    let path = manifest_dir().join("tests/golden").join(golden);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, &got).unwrap();
    }
    assert_eq!(got, std::fs::read_to_string(&path).unwrap());
}

#[test]
fn apriori_p_layout() {
    check("apriori-p", "smoke_apriori_p.cfg", "apriori_p.txt");
}

#[test]
fn apriori_h_layout() {
    check("apriori-h", "smoke_apriori_h.cfg", "apriori_h.txt");
}

#[test]
fn adaptive_layout() {
    check("adaptive", "smoke_adaptive.cfg", "adaptive.txt");
}

#[test]
fn runs_are_reproducible() {
    let cfg = manifest_dir().join("tests/fixtures/smoke_apriori_p.cfg");
    let read = || {
        let dir = tempfile::tempdir().unwrap();
        let out = monofem(&["apriori-p", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
        assert!(out.status.success());
        std::fs::read_to_string(dir.path().join("apriori_p.csv")).unwrap()
    };
    assert_eq!(read(), read());
}

#[test]
fn invalid_configs_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    for cfg in ["bad_key.cfg", "bad_problem.cfg", "missing.cfg"] {
        let path = manifest_dir().join("tests/fixtures").join(cfg);
        let out = monofem(&["adaptive", "--config", path.to_str().unwrap(), "--out", out_dir]);
        assert_eq!(out.status.code(), Some(2), "{cfg}");
    }
    let path = manifest_dir().join("tests/fixtures/smoke_adaptive.cfg");
    assert_eq!(monofem(&["nonsense", "--config", path.to_str().unwrap(), "--out", out_dir]).status.code(), Some(2));
    assert_eq!(monofem(&["adaptive"]).status.code(), Some(2));
}
