//! End-to-end runs of the `relbridge` binary: config in, report out.

use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_relbridge");

fn run_cli(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn synth_dataset_json() -> &'static str {
    r#"{"kind": "synth",
        "spec": {"n_target": 60, "n_aux": 24, "classes": 3, "edges_per_node": 5,
                 "signal": "graph", "per_class_train": 5, "n_val": 15, "n_test": 20},
        "seed": 3}"#
}

fn write_config(dir: &Path, model: &str, seeds: &str, out: &Path) -> std::path::PathBuf {
    let path = dir.join("run.json");
    let body = format!(
        r#"{{"dataset": {dataset},
            "model": "{model}",
            "bridge": {{"d_table": 8,
                        "tnn": {{"token_dim": 8, "heads": 2, "n_blocks": 1, "output_dim": 8}},
                        "graph": {{"layer_dims": [8, 8], "dropout_p": 0.0,
                                   "activations": ["relu", "none"]}},
                        "lr": 0.05, "epochs": 8, "dropout_p": 0.0, "patience": 8}},
            "seeds": {seeds},
            "workers": 2,
            "output_dir": "{out}"}}"#,
        dataset = synth_dataset_json(),
        out = out.display(),
    );
    std::fs::write(&path, body).unwrap();
    path
}

fn count_rows(path: &Path) -> usize {
    std::fs::read_to_string(path).unwrap().lines().filter(|l| !l.trim().is_empty()).count()
}

#[test]
fn bridge_run_writes_rows_report_and_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), "bridge", "[0, 1]", &out);
    let result = run_cli(&["run", "--config", config.to_str().unwrap()]);
    assert!(
        result.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&result.stdout),
        String::from_utf8_lossy(&result.stderr)
    );
    assert_eq!(count_rows(&out.join("runs.jsonl")), 2);
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("bridge"), "{report}");
    assert!(out.join("history_bridge_seed0.jsonl").exists());
    assert!(out.join("bridge_seed1.ckpt").exists());

    // Every row embeds its seed and the fully resolved config.
    let rows = std::fs::read_to_string(out.join("runs.jsonl")).unwrap();
    for line in rows.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["seed"].is_u64());
        assert_eq!(v["config"]["seed"], v["seed"]);
        assert_eq!(v["config"]["lr"], 0.05);
    }
}

#[test]
fn rerunning_with_more_seeds_appends_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = write_config(dir.path(), "random", "[0, 1]", &out);
    assert!(run_cli(&["run", "--config", config.to_str().unwrap()]).status.success());
    let first = std::fs::read_to_string(out.join("runs.jsonl")).unwrap();
    assert_eq!(first.lines().count(), 2);

    let config = write_config(dir.path(), "random", "[0, 1, 2, 3]", &out);
    assert!(run_cli(&["run", "--config", config.to_str().unwrap()]).status.success());
    let second = std::fs::read_to_string(out.join("runs.jsonl")).unwrap();
    assert_eq!(second.lines().count(), 4, "two new rows appended");
    assert!(second.starts_with(&first), "existing rows never rewritten");
}

#[test]
fn invalid_model_name_exits_one_with_no_output_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let config = dir.path().join("bad.json");
    std::fs::write(
        &config,
        format!(
            r#"{{"dataset": {}, "model": "gradient_boost", "output_dir": "{}"}}"#,
            synth_dataset_json(),
            out.display()
        ),
    )
    .unwrap();
    let result = run_cli(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&result.stderr).is_empty());
    assert!(!out.exists(), "no output files may be created on config errors");
}

#[test]
fn missing_config_file_exits_one() {
    let result = run_cli(&["run", "--config", "/nonexistent/nope.json"]);
    assert_eq!(result.status.code(), Some(1));
}

#[test]
fn synth_subcommand_writes_a_loadable_dataset_directory() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{"n_target": 50, "n_aux": 20, "classes": 2, "edges_per_node": 4,
            "signal": "table", "per_class_train": 5, "n_val": 10, "n_test": 10, "seed": 9}"#,
    )
    .unwrap();
    let out = dir.path().join("ds");
    let result = run_cli(&["synth", "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    for file in ["schema.json", "split.json", "target.csv", "aux.csv", "links.csv"] {
        assert!(out.join(file).exists(), "missing {file}");
    }

    // The written directory is consumable by a run config.
    let run = dir.path().join("run.json");
    std::fs::write(
        &run,
        format!(
            r#"{{"dataset": {{"kind": "dir", "dir": "{}"}}, "model": "random", "seeds": [0]}}"#,
            out.display()
        ),
    )
    .unwrap();
    let result = run_cli(&["run", "--config", run.to_str().unwrap()]);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    assert!(String::from_utf8_lossy(&result.stdout).contains("random"));
}

#[test]
fn split_subcommand_on_missing_data_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let result = run_cli(&["split", "--dataset", "TML1M", "--dir", dir.path().to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn split_subcommand_rejects_unknown_datasets() {
    let result = run_cli(&["split", "--dataset", "NOPE", "--dir", "/tmp"]);
    assert_eq!(result.status.code(), Some(1));
}
