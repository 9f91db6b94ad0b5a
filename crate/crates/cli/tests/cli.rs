//! End-to-end command-line tests driving the compiled binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_readmit"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn assert_code(out: &Output, want: i32) {
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(
        out.status.code(),
        Some(want),
        "exit code mismatch; stderr:\n{stderr}"
    );
}

fn synth_config(dir: &Path, flip_negative_a: f64) -> PathBuf {
    let path = dir.join("synth.json");
    let config = format!(
        r#"{{
  "n_rows": 20000,
  "seed": 11,
  "numeric_features": 4,
  "default_positive_rate": 0.5,
  "default_signal_strength": 5.0,
  "distributions": [
    {{"attribute": "gender", "groups": {{"M": 0.5, "F": 0.5}}}}
  ],
  "injections": [
    {{"attribute": "gender", "group": "F", "base_positive_rate": 0.5,
      "feature_signal_strength": 5.0, "noise_flip_rate_positive": 0.1,
      "noise_flip_rate_negative": {flip_negative_a}}},
    {{"attribute": "gender", "group": "M", "base_positive_rate": 0.5,
      "feature_signal_strength": 5.0, "noise_flip_rate_positive": 0.1,
      "noise_flip_rate_negative": 0.1}}
  ]
}}"#
    );
    fs::write(&path, config).unwrap();
    path
}

#[test]
fn synth_writes_deterministic_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config = synth_config(dir.path(), 0.1);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let result = run(&[
            "synth",
            "--config",
            config.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_code(&result, 0);
    }
    for name in ["cohort.csv", "schema.json", "manifest.json"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} not deterministic");
    }
}

#[test]
fn derive_label_handles_window_boundaries() {
    let dir = tempfile::tempdir().unwrap();
    let admissions = dir.path().join("admissions.csv");
    fs::write(
        &admissions,
        "patient_id,admission_id,admit_time,discharge_time,age,died_in_hospital,unit_transfer,is_icu_stay\n\
         P1,A1,0,10,60,false,false,true\n\
         P1,A2,39,41,60,false,false,true\n\
         P2,B1,0,10,60,false,false,true\n\
         P2,B2,41,42,60,false,false,true\n",
    )
    .unwrap();
    let out = dir.path().join("labels.csv");
    let result = run(&[
        "derive-label",
        "--admissions",
        admissions.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_code(&result, 0);
    let text = fs::read_to_string(&out).unwrap();
    assert!(text.contains("A1,true"), "{text}");
    assert!(text.contains("B1,false"), "{text}");
}

fn prepare_cohort(dir: &Path, flip: f64) -> PathBuf {
    let config = synth_config(dir, flip);
    let out = dir.join("cohort");
    let result = run(&[
        "synth",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_code(&result, 0);
    out
}

#[test]
fn train_evaluate_audit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = prepare_cohort(dir.path(), 0.1);
    let data = cohort.join("cohort.csv");
    let schema = cohort.join("schema.json");
    let model = dir.path().join("model.json");

    let result = run(&[
        "train",
        "--family",
        "logistic",
        "--data",
        data.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--seed",
        "3",
        "--out",
        model.to_str().unwrap(),
    ]);
    assert_code(&result, 0);

    let eval = run(&[
        "evaluate",
        "--model",
        model.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_code(&eval, 0);
    let summary: serde_json::Value = serde_json::from_slice(&eval.stdout).unwrap();
    let f1 = summary["scores"]["f1"].as_f64().unwrap();
    assert!(f1 > 0.85, "f1 {f1}");
}

#[test]
fn pipeline_exit_codes_follow_the_audit_verdict() {
    // fair cohort: expect exit 0
    let dir = tempfile::tempdir().unwrap();
    let fair = synth_config(dir.path(), 0.1);
    let pipeline_cfg = dir.path().join("pipeline.json");
    fs::write(
        &pipeline_cfg,
        format!(
            r#"{{"data": {{"synth_config": {:?}}}, "family": "logistic", "seed": 5}}"#,
            fair.to_str().unwrap()
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("run-fair");
    let result = run(&[
        "pipeline",
        "--config",
        pipeline_cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--no-timestamp",
    ]);
    assert_code(&result, 0);
    let stdout = String::from_utf8_lossy(&result.stdout);
    assert!(stdout.contains("overall verdict: PASS"), "{stdout}");

    // biased cohort: the F group's FPR is ~3x the reference, expect exit 2
    let biased = synth_config(dir.path(), 0.3);
    let biased_cfg = dir.path().join("pipeline-biased.json");
    fs::write(
        &biased_cfg,
        format!(
            r#"{{"data": {{"synth_config": {:?}}}, "family": "logistic", "seed": 5}}"#,
            biased.to_str().unwrap()
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("run-biased");
    let result = run(&[
        "pipeline",
        "--config",
        biased_cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--no-timestamp",
    ]);
    assert_code(&result, 2);

    // the saved report re-renders identically through `report`
    let report_path = out_dir.join("report.json");
    let rerender = run(&[
        "report",
        "--report",
        report_path.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert_code(&rerender, 0);
    let saved = fs::read_to_string(&report_path).unwrap();
    assert_eq!(String::from_utf8_lossy(&rerender.stdout), saved);
}

#[test]
fn audit_command_gates_on_saved_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let biased = synth_config(dir.path(), 0.35);
    let cfg = dir.path().join("pipeline.json");
    fs::write(
        &cfg,
        format!(
            r#"{{"data": {{"synth_config": {:?}}}, "family": "logistic", "seed": 9}}"#,
            biased.to_str().unwrap()
        ),
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let result = run(&[
        "pipeline",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--no-timestamp",
        "--quiet",
    ]);
    assert_code(&result, 2);

    // re-audit the persisted predictions without retraining
    let audit = run(&[
        "audit",
        "--predictions",
        out_dir.join("predictions.csv").to_str().unwrap(),
        "--data",
        out_dir.join("test.csv").to_str().unwrap(),
        "--schema",
        out_dir.join("schema.json").to_str().unwrap(),
        "--attributes",
        "gender",
        "--reference",
        "gender=M",
        "--format",
        "csv",
        "--no-timestamp",
    ]);
    assert_code(&audit, 2);
    let stdout = String::from_utf8_lossy(&audit.stdout);
    assert!(stdout.lines().count() > 1);
    assert!(stdout.contains("FPRP"), "{stdout}");

    // a relaxed one-sided audit of the same data in the other direction
    // still fails (the injected group has MORE error), so check tau wiring
    // instead with a generous band
    let audit = run(&[
        "audit",
        "--predictions",
        out_dir.join("predictions.csv").to_str().unwrap(),
        "--data",
        out_dir.join("test.csv").to_str().unwrap(),
        "--schema",
        out_dir.join("schema.json").to_str().unwrap(),
        "--tau",
        "0.05",
        "--no-timestamp",
    ]);
    assert_code(&audit, 0);
}

#[test]
fn execution_errors_exit_one() {
    // unknown flag: argument errors must not collide with parity-fail (2)
    let result = run(&["audit", "--nonsense"]);
    assert_code(&result, 1);

    // missing file
    let result = run(&[
        "report",
        "--report",
        "/nonexistent/report.json",
        "--format",
        "text",
    ]);
    assert_code(&result, 1);
}

#[test]
fn train_with_grid_selects_and_persists() {
    let dir = tempfile::tempdir().unwrap();
    let cohort = prepare_cohort(dir.path(), 0.1);
    let grid = dir.path().join("grid.json");
    fs::write(&grid, r#"{"lambda": [0.0001, 1000000000.0]}"#).unwrap();
    let model = dir.path().join("model.json");
    let cv = dir.path().join("cv.json");
    let result = run(&[
        "train",
        "--family",
        "logistic",
        "--grid",
        grid.to_str().unwrap(),
        "--data",
        cohort.join("cohort.csv").to_str().unwrap(),
        "--schema",
        cohort.join("schema.json").to_str().unwrap(),
        "--out",
        model.to_str().unwrap(),
        "--cv-out",
        cv.to_str().unwrap(),
    ]);
    assert_code(&result, 0);
    let cv_json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&cv).unwrap()).unwrap();
    assert_eq!(cv_json["best_index"], 0);
    let model_json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&model).unwrap()).unwrap();
    assert_eq!(model_json["spec"]["hyperparameters"]["lambda"], 0.0001);
}
