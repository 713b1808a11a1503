use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn tabpix(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tabpix"))
        .args(args)
        .current_dir(dir)
        .env_remove("TABPIX_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn jsonl(path: &Path) -> Vec<Value> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

#[test]
fn pipeline_synth_render_patchify_stats() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&tabpix(&["synth", "--count", "6", "--seed", "4", "--out", "s"], d));
    let tables = jsonl(&d.join("s/tables.jsonl"));
    let targets = jsonl(&d.join("s/targets.jsonl"));
    assert_eq!((tables.len(), targets.len()), (6, 6));
    assert_eq!(tables[2]["id"], "000002");
    assert!(targets[0]["target"].as_str().unwrap().starts_with('<'));

    ok(&tabpix(&["render", "--input", "s/tables.jsonl", "--out", "r", "--settings", "opene,lcontrol"], d));
    let manifest = jsonl(&d.join("r/manifest.jsonl"));
    assert_eq!(manifest.len(), 12);
    assert_eq!(manifest[0]["setting"], "opene");
    assert!(d.join("r/images/lcontrol/000005.pgm").is_file());

    ok(&tabpix(&["patchify", "--manifest", "r/manifest.jsonl", "--out", "r", "--patch", "8", "--max-patches", "64"], d));
    let patched = jsonl(&d.join("r/manifest.jsonl"));
    assert_eq!(patched.len(), 12);
    for e in &patched {
        let n = e["patch_count"].as_u64().unwrap();
        assert!(n <= 64);
        let bytes = fs::read(d.join("r").join(e["patch_path"].as_str().unwrap())).unwrap();
        assert_eq!(bytes.len() as u64, 16 + n * (4 + 64));
        assert_eq!(&bytes[..4], b"TPX1");
    }

    let out = tabpix(&["stats", "--input", "s/tables.jsonl", "--targets", "s/targets.jsonl", "--buckets", "4"], d);
    ok(&out);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["n"], 6);
    assert_eq!(report["edges"].as_array().unwrap().len(), 5);
    assert_eq!(report["target_tokens"]["n"], 6);
    assert_eq!(report["budget_pixels"], 524_288);
}

#[test]
fn positional_fill_and_masking() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&tabpix(&["synth", "--count", "3", "--seed", "1", "--fill", "positional", "--out", "s"], d));
    let tables = jsonl(&d.join("s/tables.jsonl"));
    assert_eq!(tables[0]["table"][0][0]["value"], "R0C0");

    ok(&tabpix(
        &["ssl-targets", "--input", "s/tables.jsonl", "--out", "m.jsonl", "--mask", "1", "--masked-tables", "masked.jsonl"],
        d,
    ));
    let targets = jsonl(&d.join("m.jsonl"));
    let masked = jsonl(&d.join("masked.jsonl"));
    assert_eq!((targets.len(), masked.len()), (3, 3));
    let answer = targets[0]["answer"].as_str().unwrap();
    assert!(answer.starts_with('R') && answer.contains('C'));
    let marked = masked[0]["table"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|r| r.as_array().unwrap())
        .filter(|c| c["value"] == "\u{25AE}")
        .count();
    assert_eq!(marked, 1);
}

#[test]
fn extract_dist_feeds_synth() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&tabpix(&["synth", "--count", "40", "--seed", "2", "--out", "s"], d));
    ok(&tabpix(&["extract-dist", "--input", "s/tables.jsonl", "--out", "d.json"], d));
    let dist: Value = serde_json::from_str(&fs::read_to_string(d.join("d.json")).unwrap()).unwrap();
    let total: f64 = dist["col_count"].as_object().unwrap().values().map(|v| v.as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    ok(&tabpix(&["synth", "--count", "5", "--dist", "d.json", "--out", "t"], d));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("c.toml"), "count = 4\nseed = 9\nout = \"from_config\"\n").unwrap();
    ok(&tabpix(&["synth", "--config", "c.toml"], d));
    assert_eq!(jsonl(&d.join("from_config/tables.jsonl")).len(), 4);
    ok(&tabpix(&["synth", "--config", "c.toml", "--count", "2", "--out", "flags"], d));
    assert_eq!(jsonl(&d.join("flags/tables.jsonl")).len(), 2);
    // Same seed from the config: identical first record.
    assert_eq!(
        jsonl(&d.join("from_config/tables.jsonl"))[0],
        jsonl(&d.join("flags/tables.jsonl"))[0]
    );
}

#[test]
fn build_writes_splits_and_is_thread_count_independent() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&tabpix(&["build", "--seed", "3", "--sizes", "5,2,2", "--out", "one", "--threads", "1"], d));
    ok(&tabpix(&["build", "--seed", "3", "--sizes", "5,2,2", "--out", "many", "--threads", "4"], d));
    assert!(d.join("one/dist.json").is_file());
    for split in ["train", "val", "test"] {
        for f in ["tables.jsonl", "targets.jsonl", "manifest.jsonl"] {
            assert_eq!(
                fs::read(d.join("one").join(split).join(f)).unwrap(),
                fs::read(d.join("many").join(split).join(f)).unwrap()
            );
        }
    }
    assert_eq!(jsonl(&d.join("one/val/tables.jsonl"))[0]["id"], "000005");
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for args in [
        &["synth", "--count", "x", "--out", "o"][..],
        &["synth", "--out", "o"],
        &["frobnicate"],
        &["build", "--sizes", "1,2", "--out", "o"],
        &["render", "--input", "t", "--out", "o", "--settings", "sepia"],
        &["build", "--gamma", "1.5", "--out", "o"],
    ] {
        let out = tabpix(args, d);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
    let out = Command::new(env!("CARGO_BIN_EXE_tabpix"))
        .args(["synth", "--count", "1", "--out", "o"])
        .current_dir(d)
        .env("TABPIX_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(tabpix(&["--help"], d).status.code(), Some(0));
}

#[test]
fn data_errors_exit_2_with_line_number() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let good = r#"{"table": [[{"value": "a"}]], "highlighted_cells": [[0, 0]]}"#;
    let bad_span = r#"{"table": [[{"value": "a", "column_span": 0}]]}"#;
    fs::write(d.join("t.jsonl"), format!("{good}\n\n{good}\n{bad_span}\n")).unwrap();
    let out = tabpix(&["render", "--input", "t.jsonl", "--out", "r"], d);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");

    fs::write(d.join("u.jsonl"), format!("{good}\nnot json\n")).unwrap();
    let out = tabpix(&["ssl-targets", "--input", "u.jsonl", "--out", "x.jsonl"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let out = tabpix(&["stats", "--input", "missing.jsonl"], d);
    assert_eq!(out.status.code(), Some(2));
}
