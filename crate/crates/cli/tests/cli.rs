use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_heterospec"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn small_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("cfg.json");
    let out = dir.join("out");
    let text = format!(
        r#"{{
  "seed": 3,
  "out": {out:?},
  "corpus": {{"source": {{"kind": "planted", "documents": 60, "doc_len": 120}}}},
  "calibration": {{"prompts": 8, "new_tokens": 60}},
  "evaluation": {{"prompts": 4}},
  "decoding": {{"max_new_tokens": 40}}{extra}
}}"#
    );
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

/// Asserts a single-line `error: kind=<kind> msg="..."` reason and the exit code.
fn assert_failure(out: &Output, kind: &str, code: i32) {
    let stderr = String::from_utf8_lossy(&out.stderr);
    let lines: Vec<&str> = stderr.lines().collect();
    assert_eq!(lines.len(), 1, "stderr: {stderr}");
    assert!(
        lines[0].starts_with(&format!("error: kind={kind} msg=\"")),
        "stderr: {stderr}"
    );
    assert!(lines[0].ends_with('"'));
    assert_eq!(out.status.code(), Some(code), "stderr: {stderr}");
}

#[test]
fn prints_default_config() {
    let out = run(&["config"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["version"], 1);
    assert_eq!(v["decoding"]["depth"], 5);
    assert_eq!(v["decoding"]["top_n"], 20);
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let out = run(&[
        "config",
        "--config",
        &cfg,
        "--seed",
        "11",
        "--out",
        "elsewhere",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["seed"], 11);
    assert_eq!(v["out"], "elsewhere");
}

#[test]
fn stages_run_in_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    for stage in [
        &["gen-corpus"][..],
        &["train-model"],
        &["calibrate"],
        &["run", "--arm", "baseline"],
        &["compare"],
        &["report"],
    ] {
        let mut args = stage.to_vec();
        args.extend(["--config", &cfg]);
        let out = run(&args);
        assert!(
            out.status.success(),
            "{stage:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    let out_dir = dir.path().join("out");
    for f in [
        "corpus.txt",
        "target.ngram",
        "draft.ngram",
        "bins.txt",
        "calibration.csv",
        "iterations_baseline.csv",
        "iterations_heterospec.csv",
        "summary_baseline.json",
        "compare.csv",
        "compare.json",
        "alpha_sweep.csv",
        "tcr_histogram.csv",
        "tcr_vs_accepted.csv",
        "bin_occupancy.csv",
    ] {
        assert!(out_dir.join(f).is_file(), "missing {f}");
    }
    let sweep = fs::read_to_string(out_dir.join("alpha_sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 4);
}

#[test]
fn report_bundle_is_deterministic() {
    let bundle = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_config(dir.path(), "");
        let out = run(&["all", "--config", &cfg, "--seed", seed]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir.path().join("out"))
            .unwrap()
            .map(|e| e.unwrap())
            .map(|e| {
                (
                    e.file_name().to_string_lossy().into_owned(),
                    fs::read(e.path()).unwrap(),
                )
            })
            .collect();
        files.sort();
        (files, out.stdout)
    };
    let (a, sa) = bundle("5");
    let (b, sb) = bundle("5");
    assert_eq!(a, b);
    assert_eq!(sa, sb);
    let (c, _) = bundle("6");
    assert_ne!(a, c);
}

#[test]
fn missing_config_file_is_io_error() {
    assert_failure(
        &run(&["gen-corpus", "--config", "/nonexistent/cfg.json"]),
        "io",
        9,
    );
}

#[test]
fn malformed_config_is_json_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{ \"seed\": ").unwrap();
    assert_failure(
        &run(&["config", "--config", path.to_str().unwrap()]),
        "json",
        11,
    );
}

#[test]
fn invalid_config_is_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), r#", "version": 2"#);
    assert_failure(&run(&["gen-corpus", "--config", &cfg]), "config", 3);
}

#[test]
fn missing_stage_inputs_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    assert_failure(&run(&["train-model", "--config", &cfg]), "io", 9);
}

#[test]
fn report_without_records_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    fs::create_dir_all(dir.path().join("out")).unwrap();
    assert_failure(&run(&["report", "--config", &cfg]), "missing-records", 8);
}

#[test]
fn corrupt_bins_are_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    for stage in ["gen-corpus", "train-model", "calibrate"] {
        assert!(run(&[stage, "--config", &cfg]).status.success());
    }
    let bins = dir.path().join("out/bins.txt");
    let text = fs::read_to_string(&bins)
        .unwrap()
        .replace("threshold ", "threshold x");
    fs::write(&bins, text).unwrap();
    assert_failure(&run(&["compare", "--config", &cfg]), "parse", 5);
}

#[test]
fn too_few_entropies_is_calibration_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let text = fs::read_to_string(&cfg).unwrap().replace(
        r#""new_tokens": 60"#,
        r#""new_tokens": 60, "min_distinct": 100000"#,
    );
    fs::write(&cfg, text).unwrap();
    for stage in ["gen-corpus", "train-model"] {
        assert!(run(&[stage, "--config", &cfg]).status.success());
    }
    assert_failure(&run(&["calibrate", "--config", &cfg]), "calibration", 6);
}
