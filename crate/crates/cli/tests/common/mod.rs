//! Helpers for driving the compiled binary in integration tests.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

pub fn pulsebench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pulsebench"))
        .args(args)
        .output()
        .expect("binary runs")
}

pub fn run_ok(args: &[&str]) -> String {
    let out = pulsebench(args);
    assert!(
        out.status.success(),
        "command {:?} failed:\nstdout: {}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr),
    );
    String::from_utf8(out.stdout).expect("stdout is UTF-8")
}

pub fn run_fail(args: &[&str], expected_code: i32) -> String {
    let out = pulsebench(args);
    let code = out.status.code().expect("process not killed by signal");
    let stderr = String::from_utf8_lossy(&out.stderr).into_owned();
    assert_eq!(
        code, expected_code,
        "command {args:?} exited {code}, expected {expected_code}\nstderr: {stderr}"
    );
    stderr
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    collect(dir, dir, &mut files);
    files
}

fn collect(root: &Path, dir: &Path, files: &mut BTreeMap<String, Vec<u8>>) {
    for entry in std::fs::read_dir(dir).expect("directory is readable") {
        let path = entry.expect("directory entry is readable").path();
        if path.is_dir() {
            collect(root, &path, files);
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("path is under root")
                .to_string_lossy()
                .into_owned();
            files.insert(rel, std::fs::read(&path).expect("file is readable"));
        }
    }
}

pub fn assert_identical_trees(a: &Path, b: &Path) {
    let fa = snapshot(a);
    let fb = snapshot(b);
    let names_a: Vec<&String> = fa.keys().collect();
    let names_b: Vec<&String> = fb.keys().collect();
    assert_eq!(names_a, names_b, "file lists differ");
    for (name, bytes) in &fa {
        assert_eq!(bytes, &fb[name], "{name} differs between runs");
    }
}
