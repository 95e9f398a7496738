#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub const STAGES: &[&[&str]] = &[
    &["ingest"],
    &["augment", "cross"],
    &["augment", "grained"],
    &["augment", "rewrite"],
    &["filter"],
    &["build-it"],
    &["mix"],
    &["eval", "generate"],
    &["eval", "classify"],
    &["eval", "report"],
];

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn toy_config() -> PathBuf {
    manifest_dir().join("fixtures/toy/config.toml")
}

pub fn golden_dir() -> PathBuf {
    manifest_dir().join("tests/fixtures/golden")
}

pub fn mctg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mctg"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("spawn mctg")
}

/// Runs every stage against `config` into `out`; returns the run directory.
pub fn run_pipeline(config: &Path, out: &Path, extra: &[&str]) -> PathBuf {
    let config = config.to_str().unwrap();
    let out_s = out.to_str().unwrap();
    for stage in STAGES {
        let mut args = vec!["--config", config, "--out", out_s];
        args.extend_from_slice(extra);
        args.extend_from_slice(stage);
        let o = mctg(&args);
        assert!(
            o.status.success(),
            "stage {stage:?} failed: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(out).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 1, "expected exactly one run directory in {}", out.display());
    dirs.pop().unwrap()
}

/// Relative path -> bytes of every file under `root`.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// Names of files that differ, are missing, or are extra (ignoring `skip`).
pub fn diff(expected: &BTreeMap<String, Vec<u8>>, actual: &BTreeMap<String, Vec<u8>>, skip: &[&str]) -> Vec<String> {
    let mut out = Vec::new();
    for (k, v) in expected {
        if skip.contains(&k.as_str()) {
            continue;
        }
        match actual.get(k) {
            None => out.push(format!("missing {k}")),
            Some(a) if a != v => out.push(format!("differs {k}")),
            _ => {}
        }
    }
    for k in actual.keys() {
        if !expected.contains_key(k) && !skip.contains(&k.as_str()) {
            out.push(format!("extra {k}"));
        }
    }
    out
}

pub fn copy_tree(from: &Path, to: &Path) {
    for (rel, bytes) in snapshot(from) {
        let dest = to.join(&rel);
        std::fs::create_dir_all(dest.parent().unwrap()).unwrap();
        std::fs::write(dest, bytes).unwrap();
    }
}
