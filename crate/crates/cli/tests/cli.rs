//! End-to-end runs of the binary against a small synthetic dataset.

use std::path::Path;
use std::process::{Command, Output};

fn surview(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surview"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL: &[&str] = &["--seg-width", "160", "--seg-height", "96"];

fn synth(dir: &Path) {
    let out = surview(
        dir,
        &[
            "synth", "--output", "manifest.json", "--sources", "6", "--width", "320", "--height",
            "180", "--duration", "1.0", "--qp-grid", "6:48:6", "--seed", "9",
        ],
    );
    assert_ok(&out);
}

#[test]
fn full_workflow_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    synth(dir);

    let mut extract = vec!["extract-features", "--manifest", "manifest.json", "--cache-dir", "cache"];
    extract.extend_from_slice(SMALL);
    let out = surview(dir, &extract);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("6 computed"));

    // Second run touches nothing.
    let before = std::fs::read(dir.join("cache/synth-000.features.csv")).unwrap();
    let out = surview(dir, &extract);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("0 computed, 6 fresh"));
    let after = std::fs::read(dir.join("cache/synth-000.features.csv")).unwrap();
    assert_eq!(before, after);

    // A corrupt cache row is repaired on the next run.
    let path = dir.join("cache/synth-002.features.csv");
    let good = std::fs::read_to_string(&path).unwrap();
    let mut broken: Vec<&str> = good.lines().collect();
    broken[1] = "synth-002,6,not-a-number";
    std::fs::write(&path, broken.join("\n")).unwrap();
    let out = surview(dir, &extract);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 computed, 5 fresh"));
    assert_eq!(std::fs::read_to_string(&path).unwrap(), good);

    let mut train = vec![
        "train", "--manifest", "manifest.json", "--cache-dir", "cache", "--output", "model.json",
    ];
    train.extend_from_slice(SMALL);
    assert_ok(&surview(dir, &train));
    assert!(dir.join("model.meta.json").exists());

    let mut predict = vec![
        "predict", "--manifest", "manifest.json", "--model", "model.json", "--source",
        "synth-001", "--cache-dir", "cache", "--output-dir", "out",
    ];
    predict.extend_from_slice(SMALL);
    assert_ok(&surview(dir, &predict));
    let curve = std::fs::read_to_string(dir.join("out/synth-001.curve.csv")).unwrap();
    assert!(curve.starts_with("qp,sur\n"));
    assert_eq!(curve.lines().count(), 9); // header + 8 grid points
    assert!(dir.join("out/synth-001.jnd.txt").exists());
    assert!(dir.join("out/synth-001.overlay.svg").exists());

    let mut evaluate = vec![
        "evaluate", "--manifest", "manifest.json", "--cache-dir", "cache", "--output-dir",
        "eval", "--folds", "3",
    ];
    evaluate.extend_from_slice(SMALL);
    assert_ok(&surview(dir, &evaluate));
    for f in [
        "per_source.csv",
        "aggregate.csv",
        "jnd_scatter.svg",
        "sur_curves.svg",
        "config.json",
    ] {
        assert!(dir.join("eval").join(f).exists(), "{f}");
    }

    // Deterministic re-run produces identical CSV bytes.
    let per_source = std::fs::read(dir.join("eval/per_source.csv")).unwrap();
    let aggregate = std::fs::read(dir.join("eval/aggregate.csv")).unwrap();
    assert_ok(&surview(dir, &evaluate));
    assert_eq!(per_source, std::fs::read(dir.join("eval/per_source.csv")).unwrap());
    assert_eq!(aggregate, std::fs::read(dir.join("eval/aggregate.csv")).unwrap());
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    synth(dir);

    // Config error: impossible fold split.
    let out = surview(
        dir,
        &["evaluate", "--manifest", "manifest.json", "--output-dir", "x", "--folds", "40"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.join("x").exists(), "no partial writes on config error");

    // Config error: external metric without a score table.
    let out = surview(
        dir,
        &["extract-features", "--manifest", "manifest.json", "--cache-dir", "c", "--metric", "external"],
    );
    assert_eq!(out.status.code(), Some(2));

    // Data error: training without a feature cache names the extract step.
    let out = surview(
        dir,
        &["train", "--manifest", "manifest.json", "--cache-dir", "missing", "--output", "m.json"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("extract-features"));

    // I/O error: the model file does not exist.
    let out = surview(
        dir,
        &["predict", "--manifest", "manifest.json", "--model", "nope.json", "--source", "zzz", "--output-dir", "o"],
    );
    assert_eq!(out.status.code(), Some(5));
}

#[test]
fn synth_is_deterministic_and_sur_fit_reports() {
    let dir = tempfile::tempdir().unwrap();
    let dir = dir.path();
    synth(dir);
    let a = std::fs::read(dir.join("manifest.json")).unwrap();
    std::fs::remove_file(dir.join("manifest.json")).unwrap();
    synth(dir);
    assert_eq!(a, std::fs::read(dir.join("manifest.json")).unwrap());

    std::fs::write(
        dir.join("ann.csv"),
        "source_id,subject_id,first_jnd_qp\ns1,0,25\ns1,1,27\ns1,2,29\n",
    )
    .unwrap();
    let out = surview(
        dir,
        &["sur-fit", "--annotations", "ann.csv", "--output", "fit.csv"],
    );
    assert_ok(&out);
    let fit = std::fs::read_to_string(dir.join("fit.csv")).unwrap();
    assert!(fit.starts_with("source_id,subjects,mean,std,gaussian_jnd,empirical_jnd\n"));
    assert!(fit.contains("s1,3,27.0000,2.0000,"));
}
