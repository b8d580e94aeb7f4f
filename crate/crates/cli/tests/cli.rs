use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn ctvae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctvae"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = ctvae(args);
    assert!(
        out.status.success(),
        "{args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn small_blobs() -> Vec<&'static str> {
    vec!["--blob-train", "300", "--blob-test", "150", "--blob-dim", "6"]
}

/// Two well-separated classes in two columns plus a label column.
fn toy_csv(path: &Path, n: usize, offset: f64) {
    let mut s = String::from("a,b,label\n");
    for i in 0..n {
        let t = (i as f64 * 0.37 + offset).sin() * 0.1;
        s.push_str(&format!("{},{},benign\n", t, 0.5 + t));
        s.push_str(&format!("{},{},attack\n", 5.0 + t, 4.0 - t));
    }
    fs::write(path, s).unwrap();
}

#[test]
fn train_writes_one_history_row_per_epoch() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let mut args = vec!["train", "--model", "ctvae", "--epochs", "300", "--seed", "1", "--out"];
    args.push(out.to_str().unwrap());
    args.extend(["--blob-train", "100", "--blob-test", "50", "--blob-dim", "4"]);
    ok(&args);
    let hist = fs::read_to_string(out.join("loss_history.csv")).unwrap();
    let lines: Vec<_> = hist.lines().collect();
    assert_eq!(lines[0], "epoch,loss");
    assert_eq!(lines.len(), 301);
    for name in ["model.bin", "train.csv", "test.csv", "train_report.json"] {
        assert!(out.join(name).exists(), "{name}");
    }
    let report = json(&out.join("train_report.json"));
    assert_eq!(report["model"], "ctvae");
    assert_eq!(report["n_train"], 100);
}

#[test]
fn ae_trains_on_csv_and_extracts_bottleneck() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("toy.csv");
    toy_csv(&csv, 40, 0.0);
    let run = dir.path().join("run");
    let (csv_s, run_s) = (csv.to_str().unwrap(), run.to_str().unwrap());
    ok(&["train", "--model", "ae", "--csv", csv_s, "--epochs", "5", "--d-z", "1", "--out", run_s]);
    let rep = dir.path().join("rep");
    let model = run.join("model.bin");
    ok(&[
        "extract",
        "--model-file",
        model.to_str().unwrap(),
        "--input",
        csv_s,
        "--out",
        rep.to_str().unwrap(),
    ]);
    let text = fs::read_to_string(rep.join("toy_rep.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "z0,label");
    assert_eq!(text.lines().count(), 81);
}

#[test]
fn missing_label_column_fails_with_stage() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("toy.csv");
    toy_csv(&csv, 5, 0.0);
    let out = ctvae(&[
        "train",
        "--csv",
        csv.to_str().unwrap(),
        "--label-col",
        "class",
        "--out",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train: loading data"), "{err}");
    assert!(err.contains("class"), "{err}");
}

#[test]
fn extract_is_sized_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let mut args = vec!["train", "--epochs", "3", "--d-z", "3", "--out", run.to_str().unwrap()];
    args.extend(small_blobs());
    ok(&args);
    let model = run.join("model.bin");
    let test = run.join("test.csv");
    let mut outputs = Vec::new();
    for sub in ["a", "b"] {
        let rep = dir.path().join(sub);
        ok(&[
            "extract",
            "--model-file",
            model.to_str().unwrap(),
            "--input",
            test.to_str().unwrap(),
            "--out",
            rep.to_str().unwrap(),
        ]);
        outputs.push(fs::read(rep.join("test_rep.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    assert_eq!(text.lines().next().unwrap(), "zhat0,zhat1,zhat2,label");
    assert_eq!(text.lines().count(), 151);
}

#[test]
fn extract_rejects_wrong_width() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let mut args = vec!["train", "--epochs", "1", "--out", run.to_str().unwrap()];
    args.extend(small_blobs());
    ok(&args);
    let csv = dir.path().join("toy.csv");
    toy_csv(&csv, 5, 0.0);
    let out = ctvae(&[
        "extract",
        "--model-file",
        run.join("model.bin").to_str().unwrap(),
        "--input",
        csv.to_str().unwrap(),
        "--out",
        dir.path().join("rep").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("extract: encoding"));
}

#[test]
fn eval_scores_perfect_toy_and_compares() {
    let dir = tempfile::tempdir().unwrap();
    let (train, test) = (dir.path().join("train.csv"), dir.path().join("test.csv"));
    toy_csv(&train, 30, 0.0);
    toy_csv(&test, 10, 1.0);
    let out = dir.path().join("eval");
    let (tr, te) = (train.to_str().unwrap(), test.to_str().unwrap());
    let stdout = ok(&[
        "eval", "--train", tr, "--test", te, "--train", tr, "--test", te, "--name", "x", "--name", "y", "--n-estimators",
        "10", "--out", out.to_str().unwrap(),
    ])
    .stdout;
    let report = json(&out.join("report.json"));
    let rows = report.as_array().unwrap();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!(r["accuracy"], 1.0);
        assert_eq!(r["fscore"], 1.0);
        assert!(r["d_bet"].as_f64().unwrap() > 0.0);
        assert!(r["d_wit"].as_f64().unwrap() > 0.0);
    }
    assert!(out.join("forest_x.json").exists() && out.join("forest_y.json").exists());
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with("name,n_test,accuracy,precision,recall,fscore,averaging,d_bet,d_wit\n"));
    assert_eq!(csv.lines().count(), 3);
    let table = String::from_utf8_lossy(&stdout);
    assert!(table.contains('x') && table.contains('y'));
}

#[test]
fn eval_requires_paired_files() {
    let dir = tempfile::tempdir().unwrap();
    let train = dir.path().join("train.csv");
    toy_csv(&train, 5, 0.0);
    let tr = train.to_str().unwrap();
    let out = ctvae(&["eval", "--train", tr, "--train", tr, "--test", tr, "--out", dir.path().to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--test"));
}

#[test]
fn bad_arguments_exit_with_usage_code() {
    let out = ctvae(&["train", "--model", "gan", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn relabel_splits_majority() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("flows.csv");
    let mut s = String::from("a,b,label\n");
    for (cx, cy) in [(0.0, 0.0), (10.0, 0.0), (0.0, 10.0)] {
        for i in 0..30 {
            let t = (i as f64).sin() * 0.2;
            s.push_str(&format!("{},{},benign\n", cx + t, cy - t));
        }
    }
    for i in 0..20 {
        s.push_str(&format!("{},{},attack\n", 5.0 + (i as f64).cos(), 5.0));
    }
    fs::write(&csv, s).unwrap();
    let out = dir.path().join("rl");
    ok(&["relabel", "--csv", csv.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let report = json(&out.join("relabel_report.json"));
    assert_eq!(report["majority"], "benign");
    assert_eq!(report["k_star"], 3);
    assert_eq!(report["n_classes"], 4);
    let mapping = fs::read_to_string(out.join("mapping.csv")).unwrap();
    assert_eq!(mapping, "original_label,new_label_range\nattack,3\nbenign,0-2\n");
    let relabeled = fs::read_to_string(out.join("relabeled.csv")).unwrap();
    assert_eq!(relabeled.lines().count(), 111);
    assert!(relabeled.starts_with("a,b,label\n"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.conf");
    fs::write(
        &cfg,
        "# small run\nepochs = 4\nblob_train = 120\nblob_test = 60\nblob_dim = 5\nseed = 9\n",
    )
    .unwrap();
    let out = dir.path().join("run");
    ok(&["train", "--config", cfg.to_str().unwrap(), "--epochs", "2", "--out", out.to_str().unwrap()]);
    let report = json(&out.join("train_report.json"));
    assert_eq!(report["n_train"], 120);
    assert_eq!(report["train"]["epochs"], 2);
    assert_eq!(report["train"]["seed"], 9);
}
